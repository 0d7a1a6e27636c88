"""
Run Manifest
------------
Every CLI run leaves manifest_<command>.json in the output directory:
  command, created_at, config (full echo), seeds, inputs {path: sha256}, outputs {path: sha256}
Re-running with the echoed config over inputs with the same digests reproduces
the run byte for byte.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

CHUNK_SIZE = 1 << 20


def file_digest(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(CHUNK_SIZE), b""):
            h.update(chunk)
    return h.hexdigest()


def digest_files(paths: Iterable[Union[str, Path, None]]) -> Dict[str, str]:
    """sha256 per existing path; missing or None paths are skipped."""
    digests: Dict[str, str] = {}
    for p in paths:
        if p is None:
            continue
        path = Path(p)
        if path.is_file():
            digests[str(path)] = file_digest(path)
    return digests


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    seeds: Dict[str, int]
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def write(self, output_dir: Union[str, Path]) -> Path:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"manifest_{self.command}.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, ensure_ascii=False, indent=2, sort_keys=True)
        return path


def load_manifest(path: Union[str, Path]) -> Optional[RunManifest]:
    p = Path(path)
    if not p.exists():
        return None
    with open(p, "r", encoding="utf-8") as f:
        data = json.load(f)
    return RunManifest(**data)


if __name__ == "__main__":
    import sys

    for arg in sys.argv[1:]:
        print(arg, file_digest(arg))
