"""HTTP service: generation jobs, tile browsing and evaluation.

Endpoint documentation lives in docs/api.md; FastAPI also serves its own
OpenAPI schema at /docs. Geometries submitted with jobs use unit-square
coordinates (x east, y north in [0, 1]) rasterized onto the configured tile
resolution.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field, model_validator

from ..config import RunConfig
from ..experiments.generate import generate_annotated, stack_digest
from ..metrics.report import evaluate_maps
from ..pipeline import Pipeline, truth_class_maps
from ..tiles.model import BoundingBox, DensityMetrics
from ..tiles.raster import Geometry, rasterize_constraints
from ..tiles.store import TileStore
from .jobs import JobQueue
from .wire import (
    encode_float_raster,
    image_to_png_bytes,
    mask_to_png_bytes,
    png_bytes_to_array,
)

UNIT_BBOX = BoundingBox(west=0.0, south=0.0, east=1.0, north=1.0)


class DensityModel(BaseModel):
    bcr: float = Field(ge=0, le=100, description="building coverage ratio, percent")
    bvd: float = Field(ge=0, description="building volume density, m^3/m^2")
    rd: float = Field(ge=0, description="road density, km/km^2")

    def to_metrics(self) -> DensityMetrics:
        return DensityMetrics(bcr=self.bcr, bvd=self.bvd, rd=self.rd)


class GeometryModel(BaseModel):
    channel: str
    kind: str
    coords: list[tuple[float, float]]
    width_px: float = 1.0


class JobRequest(BaseModel):
    city: str = "oracleville"
    density: DensityModel
    seed: int = 0
    constraint_mask_base64: str | None = None  # PNG bytes, base64
    geometries: list[GeometryModel] | None = None

    @model_validator(mode="after")
    def _one_constraint_source(self):
        if (self.constraint_mask_base64 is None) == (self.geometries is None):
            raise ValueError("provide exactly one of constraint_mask_base64 or geometries")
        return self


class EvaluateRequest(BaseModel):
    pred_tile_id: str
    truth_tile_id: str
    task: str = Field(default="energy", pattern="^(energy|height)$")


RESULT_LAYERS = ("image", "constraints", "height_classes", "energy_classes", "height", "energy")


def create_app(
    config: RunConfig,
    checkpoint_dir: str | Path | None = None,
    pipeline: Pipeline | None = None,
) -> FastAPI:
    """Build the service; refuses to start on checkpoint digest mismatches."""
    if pipeline is None:
        pipeline = Pipeline.load(config, checkpoint_dir or config.checkpoint_dir)
    if pipeline.branch is None or len(pipeline.heads) < 2:
        raise RuntimeError("serving requires control and both decoder-head checkpoints")
    store = TileStore(config.data_root)
    queue = JobQueue(workers=config.workers, depth=config.queue_depth)

    app = FastAPI(title="urbansynth gateway", version="0.1.0")
    app.state.pipeline = pipeline
    app.state.queue = queue

    def require_token(x_api_token: str | None = Header(default=None)):
        if config.api_token and x_api_token != config.api_token:
            raise HTTPException(status_code=401, detail="missing or invalid X-Api-Token")

    def _mask_from_request(req: JobRequest) -> np.ndarray:
        res = config.resolution
        if req.geometries is not None:
            geoms = [Geometry(g.channel, g.kind, tuple(map(tuple, g.coords)), g.width_px) for g in req.geometries]
            mask, errors = rasterize_constraints(geoms, UNIT_BBOX, (res, res))
            if errors:
                raise HTTPException(
                    status_code=422,
                    detail=[{"loc": ["geometries", e.index], "msg": e.reason} for e in errors],
                )
            return mask
        import base64

        try:
            png = base64.b64decode(req.constraint_mask_base64)
            arr = png_bytes_to_array(png)
        except Exception as exc:
            raise HTTPException(status_code=422, detail=f"undecodable constraint mask: {exc}")
        if arr.ndim != 3 or arr.shape[2] < 3:
            raise HTTPException(status_code=422, detail="constraint mask must be RGB")
        if arr.shape[0] != res or arr.shape[1] != res:
            raise HTTPException(
                status_code=422,
                detail=f"constraint mask must be {res}x{res}, got {arr.shape[0]}x{arr.shape[1]}",
            )
        return (arr[:, :, :3] > 127).astype(np.uint8)

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "generator_digest": stack_digest(pipeline),
            "resolution": config.resolution,
        }

    @app.post("/jobs", dependencies=[Depends(require_token)])
    def submit_job(req: JobRequest, idempotency_key: str | None = Header(default=None)):
        mask = _mask_from_request(req)
        density = req.density.to_metrics()

        def work():
            return generate_annotated(pipeline, mask, density, req.city, req.seed)

        try:
            job = queue.submit(work, idempotency_key=idempotency_key)
        except OverflowError as exc:
            raise HTTPException(status_code=429, detail=str(exc))
        return {"job_id": job.job_id, "status": job.status}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = queue.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        body = {"job_id": job.job_id, "status": job.status}
        if job.status == "failed":
            body["error"] = job.error
        if job.status == "done":
            body["result"] = {
                "layers": {layer: f"/jobs/{job.job_id}/layers/{layer}" for layer in RESULT_LAYERS},
                "generator_digest": job.result.generator_digest,
                "seed": job.result.seed,
            }
        return body

    @app.get("/jobs/{job_id}/layers/{layer}")
    def job_layer(job_id: str, layer: str):
        job = queue.get(job_id)
        if job is None or job.status != "done":
            raise HTTPException(status_code=404, detail="job missing or not finished")
        tile = job.result
        if layer == "image":
            return Response(image_to_png_bytes(tile.image), media_type="image/png")
        if layer == "constraints":
            return Response(mask_to_png_bytes(tile.constraint_mask), media_type="image/png")
        if layer == "height_classes":
            payload = encode_float_raster(tile.height_classes.labels.astype(np.float32), "height_classes")
        elif layer == "energy_classes":
            payload = encode_float_raster(tile.energy_classes.labels.astype(np.float32), "energy_classes")
        elif layer == "height":
            payload = encode_float_raster(tile.height_map, "height_m")
        elif layer == "energy":
            payload = encode_float_raster(tile.energy_map, "energy_log1p")
        else:
            raise HTTPException(status_code=404, detail=f"unknown layer {layer!r}")
        return Response(payload, media_type="application/octet-stream")

    @app.get("/tiles")
    def list_tiles(
        city: str | None = None,
        split: str | None = None,
        limit: int = Query(default=100, ge=1, le=1000),
        offset: int = Query(default=0, ge=0),
    ):
        rows = [
            r
            for r in store.read_manifest()
            if (city is None or r.city == city) and (split is None or r.split == split)
        ]
        page = rows[offset : offset + limit]
        return {
            "total": len(rows),
            "tiles": [
                {"tile_id": r.tile_id, "city": r.city, "split": r.split, "qc": r.qc.value}
                for r in page
            ],
        }

    @app.get("/tiles/{tile_id}/{layer}")
    def tile_layer(tile_id: str, layer: str):
        try:
            tile = store.load_tile(tile_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown tile {tile_id}")
        if layer == "image":
            return Response(image_to_png_bytes(tile.image), media_type="image/png")
        if layer == "constraints":
            return Response(mask_to_png_bytes(tile.constraint_mask), media_type="image/png")
        if layer == "height":
            payload = encode_float_raster(tile.height_map, "height_m")
        elif layer == "energy":
            payload = encode_float_raster(tile.energy_map, "energy_log1p")
        else:
            raise HTTPException(status_code=404, detail=f"unknown layer {layer!r}")
        return Response(payload, media_type="application/octet-stream")

    @app.post("/evaluate", dependencies=[Depends(require_token)])
    def evaluate(req: EvaluateRequest):
        try:
            pred_tile = store.load_tile(req.pred_tile_id)
            truth_tile = store.load_tile(req.truth_tile_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        bins = pipeline.bins[req.task]
        preds = truth_class_maps([pred_tile], req.task, bins)
        truths = truth_class_maps([truth_tile], req.task, bins)
        report = evaluate_maps(preds, truths, bins, source=req.task)
        return JSONResponse(content=json.loads(report.to_json()))

    for candidate in (Path("frontend/dist"), Path(__file__).resolve().parents[3] / "frontend" / "dist"):
        if candidate.exists():
            app.mount("/studio", StaticFiles(directory=candidate, html=True), name="studio")
            break

    return app
