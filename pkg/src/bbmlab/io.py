"""Versioned CSV tables and run manifests."""

import csv
from dataclasses import asdict, dataclass, field
import hashlib
import json
import os
import platform
import time
from contextlib import contextmanager

import numpy as np

from . import __version__, _accel
from .errors import DataError

CSV_VERSION = 1
_MAGIC = "# bbmlab-csv"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, name, columns, rows):
    """Write a table with a ``# bbmlab-csv v<N> <name>`` line before the header.

    Floats use ``repr`` (shortest round-trip form), so equal data always
    gives byte-identical files. UTF-8, LF line endings, comma separator.
    """
    columns = list(columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{_MAGIC} v{CSV_VERSION} {name}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            row = list(row)
            if len(row) != len(columns):
                raise DataError(f"{name}: row of length {len(row)} for {len(columns)} columns")
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Return ``(name, columns, data)``; ``data`` is a float array when every cell is numeric."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(_MAGIC):
            raise DataError(f"{path}: missing table header line")
        parts = first.split()
        version = int(parts[2].lstrip("v"))
        if version != CSV_VERSION:
            raise DataError(f"{path}: unsupported table version {version}")
        reader = csv.reader(fh)
        columns = next(reader)
        rows = list(reader)
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(-1, len(columns))
    except ValueError:
        data = rows
    return " ".join(parts[3:]), columns, data


def config_hash(payload):
    """SHA-256 of the canonical JSON form of ``payload``."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    config_hash: str = ""
    version: str = __version__
    backend: str = field(default_factory=_accel.backend_name)
    python: str = field(default_factory=platform.python_version)
    wall_time: float = 0.0
    stages: dict = field(default_factory=dict)
    pruned_count: int = 0
    pruned_mass_bound: float = 0.0
    outputs: list = field(default_factory=list)
    results: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = config_hash(self.config)

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0

    def add_pruning(self, count, bound):
        self.pruned_count += int(count)
        self.pruned_mass_bound += float(bound)

    def write(self, directory):
        path = os.path.join(directory, "manifest.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        return path


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)
