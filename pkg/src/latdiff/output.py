"""Bit-stable result serialization: CSV tables with fixed 17-significant-digit
scientific notation, and a JSON run manifest carrying the resolved configuration
and per-output checksums.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


def format_value(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.16e}"


def write_csv(columns: dict[str, np.ndarray], path) -> str:
    """Write named columns as CSV and return the sha256 of the file content.

    All values must be finite; NaN/Inf never belong in results and are rejected.
    """
    if not columns:
        raise ValueError("no columns to write")
    names = list(columns)
    arrays = []
    length = None
    for name in names:
        arr = np.asarray(columns[name])
        if arr.ndim != 1:
            raise ValueError(f"column {name!r} is not 1D")
        if length is None:
            length = arr.size
        elif arr.size != length:
            raise ValueError(f"column {name!r} has {arr.size} rows, expected {length}")
        if not np.issubdtype(arr.dtype, np.integer) and not np.all(np.isfinite(arr)):
            raise ValueError(f"column {name!r} contains non-finite values")
        arrays.append(arr)
    lines = [",".join(names)]
    for row in range(length):
        lines.append(",".join(format_value(arr[row]) for arr in arrays))
    payload = ("\n".join(lines) + "\n").encode("ascii")
    path = Path(path)
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc
    return hashlib.sha256(payload).hexdigest()


def read_csv(path) -> dict[str, np.ndarray]:
    """Inverse of write_csv; values round-trip exactly at 17 significant digits."""
    text = Path(path).read_text(encoding="ascii")
    lines = [ln for ln in text.split("\n") if ln]
    names = lines[0].split(",")
    if len(lines) == 1:
        return {name: np.array([]) for name in names}
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return {name: data[:, k] for k, name in enumerate(names)}


def checksum_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    tool: str
    version: str
    command: str
    config: dict
    master_seed: int
    started_utc: str
    finished_utc: str = ""
    outputs: dict = field(default_factory=dict)

    def add_output(self, path, checksum: str):
        self.outputs[Path(path).name] = checksum

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)

    def verify_outputs(self, directory) -> bool:
        directory = Path(directory)
        return all(
            checksum_file(directory / name) == digest
            for name, digest in self.outputs.items()
        )
