"""Model checkpoints: one ``.npz`` archive holding the config and named parameters.

Layout (format ``nsrnn-checkpoint``, version 1):

* ``__meta__``: a 0-d unicode array with JSON ``{"format", "version",
  "config", "extra"}``;
* one array per parameter, keyed by parameter name (e.g. ``lstm.weight``).

Readers accept any version with the same major number.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .models import LanguageModel, ModelConfig, build_model

FORMAT = "nsrnn-checkpoint"
VERSION = "1.0"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: LanguageModel, path: str | Path, extra: dict[str, Any] | None = None) -> None:
    """Write atomically: a partially written file never replaces a good one."""
    path = Path(path)
    meta = {"format": FORMAT, "version": VERSION, "config": model.config.to_dict(), "extra": extra or {}}
    arrays = {name: p.data for name, p in model.params.items()}
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", suffix=".npz")
    os.close(fd)
    try:
        with open(tmp, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp, 0o666 & ~mask)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> tuple[LanguageModel, dict[str, Any]]:
    with np.load(path, allow_pickle=False) as archive:
        if "__meta__" not in archive:
            raise CheckpointError(f"{path}: missing __meta__ entry")
        meta = json.loads(str(archive["__meta__"]))
        if meta.get("format") != FORMAT:
            raise CheckpointError(f"{path}: not an {FORMAT} file")
        if str(meta.get("version", "")).split(".")[0] != VERSION.split(".")[0]:
            raise CheckpointError(f"{path}: unsupported version {meta.get('version')}")
        model = build_model(ModelConfig.from_dict(meta["config"]))
        for name, p in model.params.items():
            if name not in archive:
                raise CheckpointError(f"{path}: missing parameter {name}")
            data = archive[name]
            if data.shape != p.shape:
                raise CheckpointError(f"{path}: parameter {name} has shape {data.shape}, expected {p.shape}")
            p.data = data.astype(model.dtype)
    return model, meta.get("extra", {})
