"""Atomic output files and the run manifest that lists them with digests."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from . import __version__

FIGURE_SUFFIXES = {".svg", ".png", ".pdf"}


def sha256_file(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def atomic_write(path: Union[str, Path], data: Union[str, bytes]) -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dumps(obj) -> str:
    """Sorted, indented JSON; non-finite floats become null so the output stays valid JSON."""
    return json.dumps(_finite(obj), indent=2, sort_keys=True, default=_json_default, allow_nan=False) + "\n"


def _finite(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _json_default(o):
    import numpy as np

    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


@dataclass
class RunManifest:
    config: dict
    out_dir: Path
    seeds: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    started: float = field(default_factory=time.time)
    wall_clock: float = 0.0
    version: str = __version__

    def write(self, name: str, data: Union[str, bytes]) -> Path:
        path = atomic_write(self.out_dir / name, data)
        self.record(path)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, dumps(obj))

    def record(self, path: Path):
        path = Path(path)
        rel = str(path.relative_to(self.out_dir))
        self.files = [f for f in self.files if f["path"] != rel]
        kind = "figure" if path.suffix in FIGURE_SUFFIXES else "data"
        self.files.append({"path": rel, "sha256": sha256_file(path), "bytes": path.stat().st_size, "kind": kind})

    def to_dict(self) -> dict:
        return {"config": self.config, "version": self.version, "wall_clock_seconds": self.wall_clock,
                "seeds": self.seeds, "files": sorted(self.files, key=lambda f: f["path"])}

    def finish(self, name: str = "manifest.json") -> Path:
        self.wall_clock = time.time() - self.started
        return atomic_write(self.out_dir / name, dumps(self.to_dict()))


def verify_manifest(path: Union[str, Path]) -> list:
    """Files whose current digest differs from the manifest entry."""
    path = Path(path)
    man = json.loads(path.read_text())
    bad = []
    for f in man["files"]:
        p = path.parent / f["path"]
        if not p.exists() or sha256_file(p) != f["sha256"]:
            bad.append(f["path"])
    return bad
