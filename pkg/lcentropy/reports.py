"""
CSV and JSON artifacts with reproducibility sidecars.

Every artifact gets a ``<file>.meta.json`` next to it holding the command, its sorted
parameters, the SHA-256 of their canonical JSON, the library version, the generator
name and the seed. Primary outputs carry no timestamps.
"""

import csv
import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import structlog
from pydantic import BaseModel

from lcentropy import __version__
from lcentropy.core import CheckResult, TrajectoryBuffer

logger = structlog.get_logger(__name__)

GENERATOR = "PCG64"


def jsonable(value: Any) -> Any:
    """Plain JSON types; rationals become "p/q" strings."""
    if isinstance(value, BaseModel):
        return jsonable(value.model_dump())
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    if value is None:
        return ""
    return str(value)


def canonical_params(params: BaseModel) -> Dict[str, Any]:
    return {key: jsonable(value) for key, value in sorted(params.model_dump().items())}


def config_hash(command: str, params: BaseModel) -> str:
    payload = json.dumps({"command": command, "params": canonical_params(params)}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _dump(payload: Any) -> str:
    return json.dumps(jsonable(payload), sort_keys=True, indent=2, allow_nan=True) + "\n"


class ArtifactWriter:
    """Writes a command's artifacts into one directory, in call order."""

    def __init__(self, directory: Path, command: str, params: BaseModel):
        self.directory = Path(directory)
        self.command = command
        self.params = params
        self.written: List[Path] = []

    def _metadata(self, path: Path) -> None:
        meta = {
            "command": self.command,
            "params": canonical_params(self.params),
            "config_hash": config_hash(self.command, self.params),
            "version": __version__,
            "generator": GENERATOR,
            "seed": getattr(self.params, "seed", None),
        }
        sidecar = path.with_name(path.name + ".meta.json")
        sidecar.write_text(_dump(meta), encoding="utf-8")

    def _record(self, path: Path) -> Path:
        self._metadata(path)
        self.written.append(path)
        logger.info("Artifact written", path=str(path))
        return path

    def _target(self, name: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        return self.directory / name

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self._target(name)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\r\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([cell(value) for value in row])
        return self._record(path)

    def json(self, name: str, payload: Any) -> Path:
        path = self._target(name)
        path.write_text(_dump(payload), encoding="utf-8")
        return self._record(path)

    def text(self, name: str, content: str) -> Path:
        path = self._target(name)
        path.write_text(content if content.endswith("\n") else content + "\n", encoding="utf-8")
        return self._record(path)

    def checks(self, name: str, results: Sequence[CheckResult]) -> Path:
        return self.csv(name, ["name", "passed", "detail"], ((r.name, r.passed, r.detail) for r in results))


def orbit_rows(traj: TrajectoryBuffer, limit: Optional[int] = None) -> List[tuple]:
    """(index, value) pairs; shift-space states are dumped as the symbol at their offset."""
    count = len(traj) if limit is None else min(limit, len(traj))
    if traj.space.kind == "shift":
        symbols = traj.space.symbols
        return [(i, int(symbols[traj[i]])) for i in range(count)]
    return [(i, float(traj[i])) for i in range(count)]
