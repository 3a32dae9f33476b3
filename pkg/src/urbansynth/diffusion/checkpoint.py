"""Self-describing checkpoint archives and weight digests.

Every checkpoint records what it is, the schedule constants, the tokenizer
vocabulary and a config fingerprint; dependent checkpoints (control branch,
decoder heads) additionally pin the digest of the backbone they were trained
against, and loading refuses a mismatch.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import torch
from torch import nn


def state_digest(module: nn.Module) -> str:
    """Order-stable sha256 over all parameter/buffer bytes."""
    h = hashlib.sha256()
    state = module.state_dict()
    for key in sorted(state):
        h.update(key.encode())
        h.update(state[key].detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def save_checkpoint(path: str | Path, kind: str, module: nn.Module, meta: dict) -> str:
    """Write a checkpoint; returns the weight digest recorded inside it."""
    digest = state_digest(module)
    payload = {
        "kind": kind,
        "state": module.state_dict(),
        "digest": digest,
        "meta": meta,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return digest


def load_checkpoint(
    path: str | Path,
    kind: str,
    module: nn.Module | None = None,
    expect_backbone_digest: str | None = None,
) -> dict:
    """Load a checkpoint, optionally restoring weights into ``module``.

    Raises when the stored kind differs, or when the checkpoint was trained
    against a different backbone than ``expect_backbone_digest``.
    """
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("kind") != kind:
        raise ValueError(f"checkpoint {path} is {payload.get('kind')!r}, expected {kind!r}")
    recorded = payload.get("meta", {}).get("backbone_digest")
    if expect_backbone_digest is not None and recorded != expect_backbone_digest:
        raise ValueError(
            f"checkpoint {path} was trained against backbone {recorded}, "
            f"refusing to attach to {expect_backbone_digest}"
        )
    if module is not None:
        module.load_state_dict(payload["state"])
        if state_digest(module) != payload["digest"]:
            raise ValueError(f"checkpoint {path} failed digest verification after load")
    return payload
