"""Synthetic multi-context accelerometer traces.

Each attended bout follows one context: a per-axis offset from the resting
reading plus a few sinusoids and Gaussian noise. Unattended bouts jitter
around the resting reading inside the unattended box, so the preprocessing
rule removes them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .preprocess import UnattendedThresholds
from .traceio import AccelTrace, GroundTruth, make_trace


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class ContextSpec:
    weight: float
    offsets: tuple[float, float, float]
    # per axis: ((freq_hz, amplitude, phase), ...)
    components: tuple[tuple[tuple[float, float, float], ...], ...]
    noise_std: float = 0.02
    screen_on_prob: float = 0.5


@dataclass(frozen=True)
class SynthUserSpec:
    user_id: str
    seed: int
    contexts: tuple[ContextSpec, ...]
    unattended_fraction: float = 0.3
    total_duration_ms: int = 600_000
    rate_hz: float = 16.0

    def validate(self):
        if not self.contexts:
            raise InvalidSpec("at least one context required")
        if not 0.0 <= self.unattended_fraction < 1.0:
            raise InvalidSpec("unattended_fraction must lie in [0, 1)")
        if not 4.0 <= self.rate_hz <= 40.0:
            raise InvalidSpec("rate_hz must lie in [4, 40]")
        if self.total_duration_ms <= 0:
            raise InvalidSpec("total_duration_ms must be positive")
        if abs(sum(c.weight for c in self.contexts) - 1.0) > 1e-9:
            raise InvalidSpec("context weights must sum to 1")
        for c in self.contexts:
            if len(c.components) != 3:
                raise InvalidSpec("components needed for each of x, y, z")
            for axis in c.components:
                for f, a, _ in axis:
                    if not 0 <= f < self.rate_hz / 2:
                        raise InvalidSpec(f"frequency {f} Hz not below Nyquist")
                    if a < 0:
                        raise InvalidSpec("amplitudes must be non-negative")
            if c.noise_std < 0 or not 0 <= c.screen_on_prob <= 1:
                raise InvalidSpec("bad noise_std or screen_on_prob")


MEAN_BOUT_MS = 60_000
SCREEN_BLOCK_MS = 5_000


def _bout_lengths(rng, total, mean_ms):
    n = max(1, int(round(total / mean_ms)))
    lengths = rng.exponential(1.0, n)
    return lengths * (total / lengths.sum())


def _sample_times(rng, duration_ms, rate_hz):
    base = 1000.0 / rate_hz
    n_est = int(duration_ms / base * 1.2) + 16
    steps = base * rng.uniform(0.9, 1.1, n_est)
    t = np.concatenate([[0.0], np.cumsum(steps)])
    t = np.round(t[t < duration_ms]).astype(np.int64)
    return t


def generate_trace(spec: SynthUserSpec, thresholds: UnattendedThresholds | None = None):
    """Return ``(trace, ground_truth)``; ground-truth context is -1 when unattended."""
    spec.validate()
    th = thresholds or UnattendedThresholds()
    rng = np.random.default_rng(spec.seed)
    D = float(spec.total_duration_ms)
    f = spec.unattended_fraction

    attended = _bout_lengths(rng, (1.0 - f) * D, MEAN_BOUT_MS)
    unattended = _bout_lengths(rng, f * D, MEAN_BOUT_MS) if f > 0 else np.zeros(0)
    lengths, kinds = [], []
    for i in range(max(len(attended), len(unattended))):
        if i < len(attended):
            lengths.append(attended[i])
            kinds.append(True)
        if i < len(unattended):
            lengths.append(unattended[i])
            kinds.append(False)
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    edges[-1] = D
    weights = np.array([c.weight for c in spec.contexts])
    bout_ctx = np.array([rng.choice(len(spec.contexts), p=weights) if k else -1 for k in kinds])
    bout_gain = rng.uniform(0.85, 1.15, len(kinds))

    t = _sample_times(rng, D, spec.rate_hz)
    bout = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(kinds) - 1)
    ctx = bout_ctx[bout]
    ts = t / 1000.0
    rest = th.rest_point()
    xyz = np.empty((3, len(t)))
    noise = rng.standard_normal((3, len(t)))

    for c_id, c in enumerate(spec.contexts):
        sel = ctx == c_id
        if not sel.any():
            continue
        gain = bout_gain[bout[sel]]
        for a in range(3):
            sig = np.full(sel.sum(), rest[a] + c.offsets[a])
            for freq, amp, phase in c.components[a]:
                sig += gain * amp * np.sin(2 * math.pi * freq * ts[sel] + phase)
            xyz[a, sel] = sig + c.noise_std * noise[a, sel]

    idle = ctx < 0
    if idle.any():
        bounds = ((th.lx, th.ux), (th.ly, th.uy), (th.lz, th.uz))
        for a, (lo, hi) in enumerate(bounds):
            margin = 0.1 * (hi - lo)
            xyz[a, idle] = np.clip(rest[a] + 0.05 * (hi - lo) * noise[a, idle], lo + margin, hi - margin)

    block = t // SCREEN_BLOCK_MS
    n_blocks = int(block[-1]) + 1
    block_draw = rng.uniform(size=n_blocks)
    probs = np.array([c.screen_on_prob for c in spec.contexts] + [0.02])
    screen = block_draw[block] < probs[ctx]

    trace = make_trace(spec.user_id, t, xyz[0], xyz[1], xyz[2], screen, spec.rate_hz)
    return trace, GroundTruth(t, ~idle, ctx.astype(np.int64))


def sample_durations(t: np.ndarray, total_duration_ms: float) -> np.ndarray:
    """Time each sample stands for: the gap to the next sample (or the trace end)."""
    return np.diff(np.r_[t, total_duration_ms]).astype(np.float64)


# -- populations -----------------------------------------------------------------

# (weight, offsets, dominant freq, per-axis amplitude, noise, screen prob)
BASE_CONTEXTS = (
    (0.40, (0.15, 0.55, -0.65), 0.6, (0.08, 0.12, 0.06), 0.02, 0.9),
    (0.35, (0.05, 0.95, -0.25), 1.6, (0.35, 0.50, 0.30), 0.05, 0.2),
    (0.25, (-0.55, 0.20, -0.85), 1.0, (0.20, 0.15, 0.25), 0.03, 0.05),
)
BASE_RATE_HZ = 16.0
MAX_FREQ_SPREAD_HZ = 3.0
# half-widths of the per-user deviations at distinctiveness 1
AMP_DEV = 0.4
OFFSET_DEV = 0.15


def _context_for_user(base, freq_shift, amp_scale, offset_shift, weight, noise_scale, phases, rate):
    _, offsets, f0, amps, noise, screen = base
    f_dom = f0 + freq_shift
    f_hi = min(1.3 * f_dom, 0.45 * rate)
    comps = []
    for a in range(3):
        amp = amps[a] * amp_scale[a]
        comps.append(((f_dom, amp, phases[a]), (0.5 * f_dom, 0.4 * amp, phases[a] + 1.0),
                      (f_hi, 0.2 * amp, phases[a] + 2.0)))
    return ContextSpec(
        weight=weight,
        offsets=tuple(float(o + s) for o, s in zip(offsets, offset_shift)),
        components=tuple(comps),
        noise_std=noise * noise_scale,
        screen_on_prob=screen,
    )


def generate_population(n_users: int, distinctiveness: float, master_seed: int, n_contexts: int = 3,
                        attended_ms: int = 3_600_000, unattended_fraction: float = 0.3) -> list[SynthUserSpec]:
    """User specs whose between-user differences scale with ``distinctiveness``.

    At 0 every user shares the same context parameters and rate; only the
    per-user seed differs. Dominant frequencies are spread on a grid of
    ``min(0.5, 3 / (n - 1)) * distinctiveness`` Hz per context.
    """
    if n_users < 2:
        raise InvalidSpec("a population needs at least 2 users")
    if not 0.0 <= distinctiveness <= 1.0:
        raise InvalidSpec("distinctiveness must lie in [0, 1]")
    if not 1 <= n_contexts <= len(BASE_CONTEXTS):
        raise InvalidSpec(f"n_contexts must lie in [1, {len(BASE_CONTEXTS)}]")
    d = float(distinctiveness)
    rng = np.random.default_rng(master_seed)
    bases = BASE_CONTEXTS[:n_contexts]
    base_w = np.array([b[0] for b in bases])
    base_w = base_w / base_w.sum()
    step = min(0.5, MAX_FREQ_SPREAD_HZ / (n_users - 1))
    perms = [rng.permutation(n_users) for _ in bases]
    phases = rng.uniform(0, 2 * math.pi, (n_contexts, 3))
    total_ms = int(round(attended_ms / (1.0 - unattended_fraction)))
    specs = []
    for u in range(n_users):
        amp_dev = rng.uniform(-AMP_DEV, AMP_DEV, (n_contexts, 3))
        off_dev = rng.uniform(-OFFSET_DEV, OFFSET_DEV, (n_contexts, 3))
        w_dev = rng.uniform(-0.3, 0.3, n_contexts)
        noise_dev = rng.uniform(-0.3, 0.3, n_contexts)
        phase_dev = rng.uniform(0, 2 * math.pi, (n_contexts, 3))
        rate_dev = rng.uniform(-4.0, 4.0)
        user_seed = int(rng.integers(2**31 - 1))
        rate = BASE_RATE_HZ + d * rate_dev
        w = base_w * (1.0 + d * w_dev)
        w = w / w.sum()
        ctxs = tuple(
            _context_for_user(b, d * step * perms[c][u], 1.0 + d * amp_dev[c], d * off_dev[c], float(w[c]),
                              1.0 + d * noise_dev[c], phases[c] + d * phase_dev[c], rate)
            for c, b in enumerate(bases)
        )
        # weights must sum to exactly one for validation
        last = 1.0 - sum(c.weight for c in ctxs[:-1])
        ctxs = ctxs[:-1] + (replace(ctxs[-1], weight=last),)
        specs.append(SynthUserSpec(f"user{u:02d}", user_seed, ctxs, unattended_fraction, total_ms, rate))
    return specs


def dominant_frequencies(spec: SynthUserSpec) -> list[float]:
    """Frequency of the largest-amplitude component per context."""
    out = []
    for c in spec.contexts:
        comps = [comp for axis in c.components for comp in axis]
        out.append(max(comps, key=lambda x: x[1])[0])
    return out
