"""Field and trace CSV files, the key=value run log, output directories."""
from __future__ import annotations

import csv
import os
import shlex
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import ConfigError, InvalidArgumentError, RobinConvError
from .mesh import Mesh

OUTPUT_DIR_ENV = "ROBINCONV_OUTPUT_DIR"
TRACE_COLUMNS = ("step", "epsilon", "residual", "min_u", "max_u", "max_grad",
                 "picone_integral", "collapse_flag")


class FieldFileError(RobinConvError):
    """Malformed field or trace file."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _coord_names(dim):
    return ["x", "y", "z"][:dim]


def write_field_csv(path, mesh: Mesh, u) -> None:
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise InvalidArgumentError(f"field has shape {u.shape}, mesh has {mesh.n_nodes} nodes")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_id", *_coord_names(mesh.dim), "u"])
            for i in range(mesh.n_nodes):
                w.writerow([i, *(_fmt(c) for c in mesh.nodes[i]), _fmt(u[i])])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


def read_field_csv(path, mesh: Mesh) -> np.ndarray:
    """Nodal values from a field CSV, ordered by ``node_id``."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise FieldFileError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:1] != ["node_id"] or header[-1:] != ["u"]:
        raise FieldFileError(f"{path}: header must be node_id,<coords>,u; got {','.join(header)}")
    body = [r for r in rows[1:] if r]
    if len(body) != mesh.n_nodes:
        raise FieldFileError(f"{path}: {len(body)} rows but the mesh has {mesh.n_nodes} nodes")
    u = np.full(mesh.n_nodes, np.nan)
    for lineno, row in enumerate(body, start=2):
        try:
            i = int(row[0])
            u[i] = float(row[-1])
        except (ValueError, IndexError):
            raise FieldFileError(f"{path}:{lineno}: bad row {row}") from None
    if np.isnan(u).any():
        raise FieldFileError(f"{path}: node ids do not cover 0..{mesh.n_nodes - 1}")
    return u


def write_trace_csv(path, records) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in records:
            w.writerow([r.step, _fmt(r.epsilon), _fmt(r.residual), _fmt(r.min_u), _fmt(r.max_u),
                        _fmt(r.max_grad), _fmt(r.picone_integral), r.collapse_flag])


def read_trace_csv(path) -> List[Dict[str, object]]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise FieldFileError(f"{path}: unexpected trace header {reader.fieldnames}")
        out = []
        for row in reader:
            rec = {k: float(v) for k, v in row.items() if k not in ("step", "collapse_flag")}
            rec["step"] = int(row["step"])
            rec["collapse_flag"] = row["collapse_flag"]
            out.append(rec)
    return out


# ------------------------------------------------------------------ run log

@dataclass
class RunLogRecord:
    phase: str
    message: str = ""
    epsilon: Optional[float] = None
    residual: Optional[float] = None
    min_u: Optional[float] = None
    max_u: Optional[float] = None
    picone_integral: Optional[float] = None
    verdict: Optional[str] = None
    timestamp: Optional[str] = None

    def format(self) -> str:
        ts = self.timestamp or datetime.now(timezone.utc).isoformat(timespec="milliseconds")
        parts = [f"timestamp={ts}", f"phase={self.phase}"]
        for key in ("epsilon", "residual", "min_u", "max_u", "picone_integral"):
            v = getattr(self, key)
            if v is not None:
                parts.append(f"{key}={_fmt(v)}")
        if self.verdict is not None:
            parts.append(f"verdict={self.verdict}")
        parts.append(f"message={shlex.quote(self.message)}")
        return " ".join(parts)


def parse_log_line(line: str) -> Dict[str, str]:
    out = {}
    for tok in shlex.split(line):
        key, sep, value = tok.partition("=")
        if not sep:
            raise FieldFileError(f"log token without '=': {tok!r}")
        out[key] = value
    return out


class RunLog:
    """Append-only key=value log; each record is flushed as it is written."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w", encoding="utf-8")

    def write(self, record: RunLogRecord) -> None:
        self._fh.write(record.format() + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def resolve_output_dir(configured, override=None) -> Path:
    """Command-line override, then the environment variable, then the config."""
    if override:
        return Path(override)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(configured)


@contextmanager
def exclusive_output_dir(path):
    """Create ``path`` and hold a lock file in it for the duration."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lock = path / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {path} is in use (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield path
    finally:
        lock.unlink(missing_ok=True)
