"""Per-iteration solver records and their CSV form."""

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("dim", "rel_residual", "rel_error", "shift_re", "shift_im", "kept", "millis")


@dataclass(frozen=True)
class IterRecord:
    dim: int
    rel_residual: float
    rel_error: float = float("nan")
    shift: complex = complex("nan")
    kept: int = 0
    millis: float = 0.0

    def row(self, timing=True):
        return {
            "dim": self.dim,
            "rel_residual": _fmt(self.rel_residual),
            "rel_error": _fmt(self.rel_error),
            "shift_re": _fmt(np.real(self.shift)),
            "shift_im": _fmt(np.imag(self.shift)),
            "kept": self.kept,
            "millis": _fmt(self.millis if timing else 0.0),
        }


def _fmt(x):
    x = float(x)
    return "nan" if np.isnan(x) else repr(x)


@dataclass
class SolveReport:
    """What a solver did, one record per approximation it produced.

    ``status`` is one of ``converged``, ``max_dim``, ``max_iters``,
    ``stagnation``, ``diverged`` or ``failed``.
    """

    method: str
    records: list = field(default_factory=list)
    status: str = "running"
    info: dict = field(default_factory=dict)

    def add(self, record):
        self.records.append(record)

    @property
    def dims(self):
        return [r.dim for r in self.records]

    @property
    def rel_residuals(self):
        return np.array([r.rel_residual for r in self.records])

    @property
    def rel_errors(self):
        return np.array([r.rel_error for r in self.records])

    @property
    def final_rel_residual(self):
        return self.records[-1].rel_residual if self.records else float("nan")

    def to_csv(self, path=None, timing=True):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.records:
            w.writerow(r.row(timing))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self):
        return {
            "method": self.method,
            "status": self.status,
            "iterations": len(self.records),
            "final_dim": self.records[-1].dim if self.records else 0,
            "final_rel_residual": self.final_rel_residual,
            **{k: v for k, v in self.info.items() if isinstance(v, (int, float, str, bool))},
        }


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k in ("dim", "kept") else float(v)) for k, v in row.items()} for row in rows]


class Stopwatch:
    def __init__(self):
        self.t0 = time.perf_counter()

    def millis(self):
        return 1e3 * (time.perf_counter() - self.t0)


def relative_error(X_ref, X_hat):
    """||X_ref - X_hat||_F / ||X_ref||_F, or nan without a reference."""
    if X_ref is None:
        return float("nan")
    nrm = np.linalg.norm(X_ref)
    if nrm == 0.0:
        return float(np.linalg.norm(X_hat))
    return float(np.linalg.norm(X_ref - X_hat) / nrm)
