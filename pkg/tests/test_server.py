import base64
import hashlib
import time

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from urbansynth.config import RunConfig
from urbansynth.control import ControlBranch
from urbansynth.decoders import DecoderHead
from urbansynth.oracle import build_oracle_corpus
from urbansynth.pipeline import Pipeline
from urbansynth.server.app import create_app
from urbansynth.server.wire import decode_float_raster, encode_float_raster, mask_to_png_bytes

RES = 32


def tiny_config(tmp_path, **kw):
    return RunConfig(
        resolution=RES,
        timesteps=8,
        vae_channels=8,
        unet_channels=16,
        text_embed_dim=16,
        head_channels=16,
        batch_size=4,
        workers=2,
        data_root=str(tmp_path / "tiles"),
        checkpoint_dir=str(tmp_path / "ckpt"),
        **kw,
    )


def stub_pipeline(cfg, seed=0):
    """Initialized (untrained) stack: valid for serving and determinism tests."""
    pipe = Pipeline.initialize(cfg, seed=seed)
    pipe.branch = ControlBranch(pipe.backbone, cfg.constraint_channels)
    for kind in ("height", "energy"):
        pipe.heads[kind] = DecoderHead(
            kind, in_channels=pipe.fused_channels(), width=cfg.head_channels
        )
    from urbansynth.tiles.transforms import fit_bins

    rng = np.random.default_rng(0)
    pipe.bins = {
        "height": fit_bins(rng.uniform(3, 60, 500), "height_quintile_4"),
        "energy": fit_bins(rng.uniform(1, 9, 500), "energy_tertile"),
    }
    return pipe


@pytest.fixture(scope="module")
def service(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("svc")
    cfg = tiny_config(tmp_path)
    build_oracle_corpus(cfg.data_root, n_tiles=6, seed=3, resolution=RES)
    pipe = stub_pipeline(cfg)
    app = create_app(cfg, pipeline=pipe)
    return TestClient(app), cfg, pipe


def job_body(seed=0, res=RES):
    mask = np.zeros((res, res, 3), dtype=np.uint8)
    mask[res // 2 - 2 : res // 2 + 2, :, 2] = 1
    return {
        "city": "testville",
        "density": {"bcr": 20.0, "bvd": 3.0, "rd": 1.0},
        "seed": seed,
        "constraint_mask_base64": base64.b64encode(mask_to_png_bytes(mask)).decode(),
    }


def wait_done(client, job_id, timeout=90.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        body = client.get(f"/jobs/{job_id}").json()
        if body["status"] in ("done", "failed"):
            return body
        time.sleep(0.1)
    raise TimeoutError(job_id)


class TestWireFormat:
    def test_float_raster_round_trip(self):
        grid = np.random.default_rng(0).normal(size=(17, 23)).astype(np.float32)
        payload = encode_float_raster(grid, "energy_log1p")
        out, kind = decode_float_raster(payload)
        np.testing.assert_array_equal(out, grid)
        assert kind == "energy_log1p"
        assert payload[:8] == b"USYNRAS1"

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError, match="magic"):
            decode_float_raster(b"NOTRIGHT" + b"\0" * 40)


class TestEndpoints:
    def test_health(self, service):
        client, _, pipe = service
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert len(body["generator_digest"]) == 64

    def test_job_round_trip_layers_aligned(self, service):
        client, cfg, _ = service
        r = client.post("/jobs", json=job_body(seed=5))
        assert r.status_code == 200, r.text
        body = wait_done(client, r.json()["job_id"])
        assert body["status"] == "done", body
        layers = body["result"]["layers"]
        image = client.get(layers["image"]).content
        hc = client.get(layers["height_classes"]).content
        ec = client.get(layers["energy_classes"]).content
        h_grid, _ = decode_float_raster(hc)
        e_grid, _ = decode_float_raster(ec)
        assert h_grid.shape == e_grid.shape == (cfg.resolution, cfg.resolution)
        assert set(np.unique(h_grid)).issubset(set(range(5)))
        assert set(np.unique(e_grid)).issubset(set(range(4)))
        from urbansynth.server.wire import png_bytes_to_array

        assert png_bytes_to_array(image).shape == (cfg.resolution, cfg.resolution, 3)

    def test_malformed_density_names_field(self, service):
        client, _, _ = service
        bad = job_body()
        bad["density"]["bcr"] = 150.0
        r = client.post("/jobs", json=bad)
        assert r.status_code == 422
        assert "bcr" in r.text

    def test_both_constraint_sources_rejected(self, service):
        client, _, _ = service
        bad = job_body()
        bad["geometries"] = [
            {"channel": "major_road", "kind": "line", "coords": [[0, 0.5], [1, 0.5]], "width_px": 2}
        ]
        assert client.post("/jobs", json=bad).status_code == 422

    def test_geometry_submission(self, service):
        client, cfg, _ = service
        req = {
            "city": "testville",
            "density": {"bcr": 10.0, "bvd": 1.0, "rd": 0.5},
            "seed": 1,
            "geometries": [
                {"channel": "major_road", "kind": "line", "coords": [[0, 0.5], [1, 0.5]], "width_px": 4}
            ],
        }
        r = client.post("/jobs", json=req)
        assert r.status_code == 200
        body = wait_done(client, r.json()["job_id"])
        assert body["status"] == "done"

    def test_unknown_job_404(self, service):
        client, _, _ = service
        assert client.get("/jobs/doesnotexist").status_code == 404

    def test_idempotency_key_reuses_job(self, service):
        client, _, _ = service
        headers = {"Idempotency-Key": "retry-123"}
        a = client.post("/jobs", json=job_body(seed=8), headers=headers).json()
        b = client.post("/jobs", json=job_body(seed=8), headers=headers).json()
        assert a["job_id"] == b["job_id"]

    def test_eight_concurrent_jobs_isolated(self, service):
        client, _, _ = service
        ids = {}
        for seed in range(20, 28):
            ids[seed] = client.post("/jobs", json=job_body(seed=seed)).json()["job_id"]
        digests = {}
        for seed, job_id in ids.items():
            body = wait_done(client, job_id)
            assert body["status"] == "done"
            payload = client.get(body["result"]["layers"]["image"]).content
            digests[seed] = hashlib.sha256(payload).hexdigest()
        assert len(set(digests.values())) == 8  # distinct seeds, distinct results

    def test_same_seed_jobs_identical(self, service):
        client, _, _ = service
        d = []
        for _ in range(2):
            job_id = client.post("/jobs", json=job_body(seed=77)).json()["job_id"]
            body = wait_done(client, job_id)
            payload = client.get(body["result"]["layers"]["image"]).content
            d.append(hashlib.sha256(payload).hexdigest())
        assert d[0] == d[1]

    def test_tile_browsing_and_layers(self, service):
        client, _, _ = service
        body = client.get("/tiles").json()
        assert body["total"] == 6
        tile_id = body["tiles"][0]["tile_id"]
        png = client.get(f"/tiles/{tile_id}/image")
        assert png.status_code == 200
        raster = client.get(f"/tiles/{tile_id}/energy")
        grid, kind = decode_float_raster(raster.content)
        assert kind == "energy_log1p"
        assert grid.shape == (RES, RES)
        assert client.get(f"/tiles/{tile_id}/nope").status_code == 404
        assert client.get("/tiles/ghost/image").status_code == 404

    def test_evaluate_identity_all_ones(self, service):
        client, _, _ = service
        tile_id = client.get("/tiles").json()["tiles"][0]["tile_id"]
        r = client.post("/evaluate", json={"pred_tile_id": tile_id, "truth_tile_id": tile_id})
        assert r.status_code == 200
        body = r.json()
        assert body["miou"] == 1.0
        assert body["accuracy"] == 1.0
        assert body["verdict"] == "calibrated"


class TestAuth:
    def test_token_required_when_configured(self, tmp_path):
        cfg = tiny_config(tmp_path, api_token="sekrit")
        build_oracle_corpus(cfg.data_root, n_tiles=4, seed=5, resolution=RES)
        client = TestClient(create_app(cfg, pipeline=stub_pipeline(cfg)))
        assert client.post("/jobs", json=job_body()).status_code == 401
        ok = client.post("/jobs", json=job_body(), headers={"X-Api-Token": "sekrit"})
        assert ok.status_code == 200
        # reads stay open
        assert client.get("/health").status_code == 200


def test_serving_requires_full_stack(tmp_path):
    cfg = tiny_config(tmp_path)
    build_oracle_corpus(cfg.data_root, n_tiles=4, seed=6, resolution=RES)
    pipe = Pipeline.initialize(cfg)  # no control, no heads
    with pytest.raises(RuntimeError, match="requires control"):
        create_app(cfg, pipeline=pipe)


def test_digest_mismatch_refused_at_load(tmp_path):
    cfg = tiny_config(tmp_path)
    pipe = stub_pipeline(cfg)
    pipe.save(cfg.checkpoint_dir)
    # corrupt the backbone: dependent checkpoints must be refused
    other = stub_pipeline(cfg, seed=99)
    from urbansynth.pipeline import CHECKPOINT_FILES
    from urbansynth.diffusion.checkpoint import save_checkpoint

    save_checkpoint(
        f"{cfg.checkpoint_dir}/{CHECKPOINT_FILES['backbone']}",
        "backbone",
        torch.nn.ModuleDict({"unet": other.backbone, "text": other.text_encoder}),
        {"schedule": other.schedule.to_dict(), "vocab": other.tokenizer.to_dict()},
    )
    with pytest.raises(ValueError, match="refusing"):
        Pipeline.load(cfg, cfg.checkpoint_dir)
