"""Accelerometer trace files and profile persistence.

Trace files are header-bearing CSV (``t_ms,x,y,z,screen_on``), UTF-8 with
``.`` as the decimal separator. ``t_ms`` is milliseconds since trace start.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACE_HEADER = ("t_ms", "x", "y", "z", "screen_on")
PROFILE_SCHEMA_VERSION = 1

_TRUE = {"1", "true", "t", "yes", "on"}
_FALSE = {"0", "false", "f", "no", "off"}


class TraceError(ValueError):
    pass


class MalformedRow(TraceError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        super().__init__(f"malformed row at line {line}" + (f": {detail}" if detail else ""))


class EmptyTrace(TraceError):
    pass


class NonMonotonicTime(TraceError):
    def __init__(self, line: int):
        self.line = line
        super().__init__(f"timestamp decreases at line {line}")


class SerializationError(ValueError):
    pass


class SchemaVersionMismatch(SerializationError):
    pass


@dataclass(frozen=True, eq=False)
class AccelTrace:
    """Tri-axial samples of one user, stored column-wise.

    ``t`` is int64 milliseconds (strictly increasing), ``x``/``y``/``z`` are
    float64 device units and ``screen_on`` is boolean.
    """

    user_id: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    screen_on: np.ndarray
    nominal_rate_hz: float = 1.0
    duplicates_collapsed: int = 0

    def __post_init__(self):
        n = len(self.t)
        for name in ("x", "y", "z", "screen_on"):
            if len(getattr(self, name)) != n:
                raise TraceError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        for arr in (self.t, self.x, self.y, self.z, self.screen_on):
            arr.flags.writeable = False

    def __len__(self):
        return len(self.t)

    @property
    def duration_ms(self) -> int:
        if len(self.t) == 0:
            return 0
        return int(self.t[-1] - self.t[0])

    def subset(self, mask_or_index) -> "AccelTrace":
        return AccelTrace(
            self.user_id,
            self.t[mask_or_index].copy(),
            self.x[mask_or_index].copy(),
            self.y[mask_or_index].copy(),
            self.z[mask_or_index].copy(),
            self.screen_on[mask_or_index].copy(),
            self.nominal_rate_hz,
            self.duplicates_collapsed,
        )

    def with_xyz(self, x, y, z) -> "AccelTrace":
        return AccelTrace(self.user_id, self.t.copy(), np.asarray(x, float), np.asarray(y, float),
                          np.asarray(z, float), self.screen_on.copy(), self.nominal_rate_hz,
                          self.duplicates_collapsed)


def make_trace(user_id, t, x, y, z, screen_on, nominal_rate_hz=None) -> AccelTrace:
    """Build a validated trace from array-likes."""
    t = np.asarray(t, dtype=np.int64)
    x, y, z = (np.asarray(a, dtype=np.float64) for a in (x, y, z))
    screen_on = np.asarray(screen_on, dtype=bool)
    if len(t) == 0:
        raise EmptyTrace("trace has no samples")
    if np.any(np.diff(t) <= 0):
        raise TraceError("timestamps must be strictly increasing")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise TraceError("non-finite acceleration values")
    if nominal_rate_hz is None:
        nominal_rate_hz = estimate_rate(t)
    return AccelTrace(str(user_id), t, x, y, z, screen_on, float(nominal_rate_hz))


def estimate_rate(t: np.ndarray) -> float:
    if len(t) < 2:
        return 1.0
    return 1000.0 / float(np.median(np.diff(t)))


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValueError(f"bad boolean {text!r}")


def load_trace(path, user_id: str | None = None) -> AccelTrace:
    """Read and validate a CSV trace.

    Duplicate timestamps collapse to their last occurrence; the number of
    dropped rows is kept in ``duplicates_collapsed``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    ts, xs, ys, zs, ss = [], [], [], [], []
    dups = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyTrace(f"{path} is empty")
        if tuple(h.strip() for h in header) != TRACE_HEADER:
            raise MalformedRow(1, f"expected header {','.join(TRACE_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise MalformedRow(line, f"expected 5 fields, got {len(row)}")
            try:
                t = int(row[0])
                x, y, z = float(row[1]), float(row[2]), float(row[3])
                s = _parse_bool(row[4])
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
            if t < 0 or not all(math.isfinite(v) for v in (x, y, z)):
                raise MalformedRow(line, "negative time or non-finite value")
            if ts:
                if t < ts[-1]:
                    raise NonMonotonicTime(line)
                if t == ts[-1]:
                    dups += 1
                    xs[-1], ys[-1], zs[-1], ss[-1] = x, y, z, s
                    continue
            ts.append(t)
            xs.append(x)
            ys.append(y)
            zs.append(z)
            ss.append(s)
    if not ts:
        raise EmptyTrace(f"{path} has no samples")
    t_arr = np.asarray(ts, dtype=np.int64)
    return AccelTrace(
        user_id if user_id is not None else path.stem,
        t_arr,
        np.asarray(xs, dtype=np.float64),
        np.asarray(ys, dtype=np.float64),
        np.asarray(zs, dtype=np.float64),
        np.asarray(ss, dtype=bool),
        estimate_rate(t_arr),
        dups,
    )


def save_trace(trace: AccelTrace, path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        for t, x, y, z, s in zip(trace.t.tolist(), trace.x.tolist(), trace.y.tolist(),
                                 trace.z.tolist(), trace.screen_on.tolist()):
            fh.write(f"{t},{x!r},{y!r},{z!r},{int(s)}\n")


# -- profiles -----------------------------------------------------------------

def save_profile(profile, path) -> None:
    """Write a :class:`~ctxauth.evaluation.UserProfile` as one JSON document.

    Floats are written with ``repr`` precision so a reload is bit-identical.
    """
    doc = {"schema_version": PROFILE_SCHEMA_VERSION, "profile": profile.to_dict()}
    try:
        text = json.dumps(doc, allow_nan=False, separators=(",", ":"))
    except (TypeError, ValueError) as exc:
        raise SerializationError(f"cannot serialize profile: {exc}") from exc
    Path(path).write_text(text, encoding="utf-8")


def load_profile(path):
    from .evaluation import UserProfile

    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SerializationError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise SerializationError(f"{path}: missing schema_version")
    if doc["schema_version"] != PROFILE_SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"{path}: schema_version {doc['schema_version']!r}, expected {PROFILE_SCHEMA_VERSION}")
    try:
        return UserProfile.from_dict(doc["profile"])
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SerializationError(f"{path}: invalid profile document: {exc}") from exc


@dataclass
class GroundTruth:
    """Per-sample labels emitted next to synthetic traces."""

    t: np.ndarray
    attended: np.ndarray
    context: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def save_ground_truth(gt: GroundTruth, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("t_ms,attended,context_id\n")
        for t, a, c in zip(gt.t.tolist(), gt.attended.tolist(), gt.context.tolist()):
            fh.write(f"{t},{int(a)},{c}\n")


def load_ground_truth(path) -> GroundTruth:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    return GroundTruth(data[:, 0], data[:, 1].astype(bool), data[:, 2])
