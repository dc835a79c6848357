import numpy as np
import pytest

from ctxauth.synthgen import ContextSpec, SynthUserSpec, generate_trace
from ctxauth.traceio import make_trace


def sine_trace(user_id="u", seconds=30, rate=20.0, freqs=(1.0, 2.0, 3.0), offset=(0.5, 0.5, 0.5), seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(0, int(seconds * 1000), int(1000 / rate), dtype=np.int64)
    ts = t / 1000.0
    cols = [offset[a] + np.sin(2 * np.pi * freqs[a] * ts) + 0.05 * rng.standard_normal(len(t)) for a in range(3)]
    screen = rng.uniform(size=len(t)) < 0.5
    return make_trace(user_id, t, *cols, screen, rate)


def two_context_spec(user_id="blob", seed=11, minutes=20.0, shift=0.0):
    def ctx(weight, offsets, f):
        comps = tuple(((f + shift, 0.3, 0.1 * a), (0.5 * (f + shift), 0.1, 0.2)) for a in range(3))
        return ContextSpec(weight, offsets, comps, noise_std=0.02, screen_on_prob=0.5)

    return SynthUserSpec(user_id, seed, (ctx(0.5, (0.6, 0.6, -0.6), 0.7), ctx(0.5, (-0.6, 1.2, 0.2), 2.5)),
                         unattended_fraction=0.2, total_duration_ms=int(minutes * 60_000), rate_hz=16.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def two_context_trace():
    trace, truth = generate_trace(two_context_spec())
    return trace, truth


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        ok, detail = lines[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
