"""Unattended-segment removal and median denoising."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .traceio import AccelTrace


class EmptyAfterFilter(ValueError):
    """Every segment of the trace looked unattended."""


@dataclass(frozen=True)
class UnattendedThresholds:
    lx: float = -0.036
    ux: float = 0.035
    ly: float = -0.02
    uy: float = 0.06
    lz: float = -0.22
    uz: float = -0.13
    segment_len_ms: int = 2500

    def __post_init__(self):
        if not (self.lx < self.ux and self.ly < self.uy and self.lz < self.uz):
            raise ValueError("each lower threshold must be below its upper threshold")
        if self.segment_len_ms <= 0:
            raise ValueError("segment_len_ms must be positive")

    def rest_point(self) -> tuple[float, float, float]:
        """Centre of the unattended box."""
        return ((self.lx + self.ux) / 2, (self.ly + self.uy) / 2, (self.lz + self.uz) / 2)

    def is_unattended(self, mx, my, mz):
        """Vectorised discard rule on segment medians (strict inequalities)."""
        mx, my, mz = np.asarray(mx), np.asarray(my), np.asarray(mz)
        return ((self.lx < mx) & (mx < self.ux)
                & (self.ly < my) & (my < self.uy)
                & (self.lz < mz) & (mz < self.uz))


@dataclass(frozen=True)
class SegmentMedians:
    mx: float
    my: float
    mz: float


def compute_magnitude(x, y, z):
    return np.sqrt(np.square(x) + np.square(y) + np.square(z))


def segment_medians(trace: AccelTrace, segment_len_ms: int = 2500):
    """Return (segment boundaries as sample indices, list of SegmentMedians)."""
    seg = (trace.t - trace.t[0]) // segment_len_ms
    starts = np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])
    bounds = np.r_[starts, len(seg)]
    medians = [
        SegmentMedians(float(np.median(trace.x[a:b])), float(np.median(trace.y[a:b])),
                       float(np.median(trace.z[a:b])))
        for a, b in zip(bounds[:-1], bounds[1:])
    ]
    return bounds, medians


def remove_unattended(trace: AccelTrace, th: UnattendedThresholds | None = None) -> AccelTrace:
    """Drop every fixed-length time segment whose medians sit inside the rest box.

    Segments are anchored at the first timestamp; a trailing partial segment
    is judged by the same rule. Kept samples retain their timestamps.
    """
    th = th or UnattendedThresholds()
    if len(trace) == 0:
        raise EmptyAfterFilter("empty trace")
    bounds, medians = segment_medians(trace, th.segment_len_ms)
    keep = np.zeros(len(trace), dtype=bool)
    for a, b, m in zip(bounds[:-1], bounds[1:], medians):
        if not th.is_unattended(m.mx, m.my, m.mz):
            keep[a:b] = True
    if not keep.any():
        raise EmptyAfterFilter(f"user {trace.user_id}: whole trace is unattended")
    return trace.subset(keep)


def running_median(values, span: int = 3) -> np.ndarray:
    if span < 1 or span % 2 == 0:
        raise ValueError("span must be a positive odd integer")
    values = np.asarray(values, dtype=np.float64)
    out = values.copy()
    half = span // 2
    if len(values) >= span and span > 1:
        out[half:len(values) - half] = np.median(sliding_window_view(values, span), axis=1)
    return out


def median_filter(trace: AccelTrace, span: int = 3) -> AccelTrace:
    """Per-axis running median; the first and last ``span // 2`` samples pass through."""
    return trace.with_xyz(running_median(trace.x, span), running_median(trace.y, span),
                          running_median(trace.z, span))


def preprocess(trace: AccelTrace, th: UnattendedThresholds | None = None, span: int = 3) -> AccelTrace:
    return median_filter(remove_unattended(trace, th), span)
