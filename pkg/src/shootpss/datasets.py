"""CSV datasets written by the command-line driver.

File layout::

    # key=value          (metadata, any number of lines)
    t,V(1),V(2)          (header: independent variable, then series)
    0,1.2345678901234567,...

Numbers use 17 significant digits, so reading a file back reproduces every
float64 exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DatasetIOError


class DatasetKind(str, Enum):
    TRANSIENT = "TransientSet"
    PSS_TIME = "PssTimeSet"
    PSS_SPECTRUM = "PssSpectrumSet"
    CONVERGENCE = "ConvergenceSet"


_SUFFIX = {DatasetKind.TRANSIENT: "t", DatasetKind.PSS_TIME: "p", DatasetKind.PSS_SPECTRUM: "pa"}


@dataclass
class Dataset:
    kind: DatasetKind
    columns: dict[str, np.ndarray]
    metadata: dict[str, str] = field(default_factory=dict)
    quantity: str = "V"  # "V" or "I"; selects .Vt vs .It etc.

    def __post_init__(self):
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        self.metadata = {k: _meta_str(v) for k, v in self.metadata.items()}
        lengths = {v.shape for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"column lengths differ: {sorted(lengths)}")

    @property
    def extension(self) -> str:
        if self.kind == DatasetKind.CONVERGENCE:
            return ".conv"
        return f".{self.quantity}{_SUFFIX[self.kind]}"

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.kind == other.kind and self.quantity == other.quantity
                and self.metadata == other.metadata
                and list(self.columns) == list(other.columns)
                and all(np.array_equal(self.columns[k], other.columns[k], equal_nan=True)
                        for k in self.columns))


def _meta_str(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _kind_from_extension(ext: str) -> tuple[DatasetKind, str]:
    if ext == ".conv":
        return DatasetKind.CONVERGENCE, "V"
    for kind, suffix in _SUFFIX.items():
        for q in ("V", "I"):
            if ext == f".{q}{suffix}":
                return kind, q
    raise DatasetIOError(f"unknown dataset extension {ext!r}")


def write_dataset(ds: Dataset, directory: str, stem: str) -> str:
    """Write ``ds`` to ``directory/stem<ext>`` and return the path."""
    path = os.path.join(directory, stem + ds.extension)
    names = list(ds.columns)
    data = np.column_stack([ds.columns[k] for k in names]) if names else np.zeros((0, 0))
    try:
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for k, v in ds.metadata.items():
                fh.write(f"# {k}={v}\n")
            fh.write(",".join(names) + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    except OSError as exc:
        raise DatasetIOError(f"cannot write {path}: {exc}") from exc
    return path


def read_dataset(path: str) -> Dataset:
    kind, quantity = _kind_from_extension(os.path.splitext(path)[1])
    meta: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc}") from exc
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].strip().partition("=")
        meta[key] = val
        i += 1
    names = lines[i].split(",") if i < len(lines) and lines[i] else []
    rows = [[float(v) for v in line.split(",")] for line in lines[i + 1:] if line]
    data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return Dataset(kind, {k: data[:, j] for j, k in enumerate(names)}, meta, quantity)
