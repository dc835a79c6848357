"""Command-line entry point: ``ctxauth <subcommand> ...``.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path

import yaml

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .evaluation import (EnrollmentFailure, aggregate, enroll_user, failure_to_enroll,
                         impostor_pools, prepare_user, run_population, verify_and_score)
from .reports import (read_summary, write_cluster_summary, write_comparison, write_fte, write_json,
                      write_results, write_summary)
from .stats import compare_classifiers
from .synthgen import generate_population, generate_trace
from .traceio import (SerializationError, TraceError, load_profile, load_trace, save_ground_truth, save_profile,
                      save_trace)

log = logging.getLogger("ctxauth")


def _overrides(args) -> dict:
    ov = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(item, "overrides take the form key=value")
        key, value = item.split("=", 1)
        ov[key.strip()] = yaml.safe_load(value)
    if getattr(args, "seed", None) is not None:
        ov["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        ov["jobs"] = args.jobs
    if getattr(args, "algorithms", None):
        ov["evaluation.algorithms"] = [a.strip().upper() for a in args.algorithms.split(",") if a.strip()]
    return ov


def _config(args) -> RunConfig:
    return load_config(getattr(args, "config", None), _overrides(args))


def _trace_files(trace_dir) -> list[Path]:
    files = sorted(Path(trace_dir).glob("*.csv"))
    if not files:
        raise ConfigError("traces", f"no *.csv traces in {trace_dir}")
    return files


def _prepare_all(traces, cfg) -> dict:
    data = {}
    for tr in traces:
        t0 = time.perf_counter()
        data[tr.user_id] = prepare_user(tr, cfg)
        log.info("%s: %d windows (%.1fs)", tr.user_id, len(data[tr.user_id]), time.perf_counter() - t0)
    return data


def _synthesize(cfg: RunConfig, out_dir: Path):
    s = cfg.synth
    specs = generate_population(s.n_users, s.distinctiveness, cfg.seed, s.n_contexts,
                                int(round(s.attended_minutes * 60_000)), s.unattended_fraction)
    (out_dir / "traces").mkdir(parents=True, exist_ok=True)
    (out_dir / "truth").mkdir(parents=True, exist_ok=True)
    traces = []
    for spec in specs:
        tr, gt = generate_trace(spec, cfg.preprocess.thresholds)
        save_trace(tr, out_dir / "traces" / f"{spec.user_id}.csv")
        save_ground_truth(gt, out_dir / "truth" / f"{spec.user_id}.csv")
        traces.append(tr)
    write_json(out_dir / "population.json", [asdict(s) for s in specs])
    return traces


# -- subcommands ----------------------------------------------------------------

def cmd_synth(args):
    cfg = _config(args)
    overrides = {}
    if args.n_users is not None:
        overrides["n_users"] = args.n_users
    if args.distinctiveness is not None:
        overrides["distinctiveness"] = args.distinctiveness
    if args.attended_minutes is not None:
        overrides["attended_minutes"] = args.attended_minutes
    if overrides:
        cfg = load_config(args.config, {**_overrides(args), **{f"synth.{k}": v for k, v in overrides.items()}})
    out = Path(args.out_dir)
    traces = _synthesize(cfg, out)
    print(f"wrote {len(traces)} traces to {out / 'traces'}")


def cmd_enroll(args):
    cfg = _config(args)
    traces = [load_trace(p) for p in _trace_files(args.traces)]
    data = _prepare_all(traces, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = {}
    for uid in sorted(data):
        train_ids, _ = impostor_pools(uid, list(data))
        try:
            profile = enroll_user(data[uid], [data[u] for u in train_ids], cfg.evaluation.algorithms, cfg)
        except EnrollmentFailure as exc:
            failures[uid] = exc.reason
            log.warning("skipping %s: %s", uid, exc.reason)
            continue
        save_profile(profile, out / f"{uid}.json")
    write_json(out / "skipped.json", failures)
    print(f"enrolled {len(data) - len(failures)} of {len(data)} users into {out}")


def cmd_evaluate(args):
    cfg = _config(args)
    traces = [load_trace(p) for p in _trace_files(args.traces)]
    data = _prepare_all(traces, cfg)
    profiles = {}
    for p in sorted(Path(args.profiles).glob("*.json")):
        if p.name == "skipped.json":
            continue
        prof = load_profile(p)
        profiles[prof.user_id] = prof
    if not profiles:
        raise ConfigError("profiles", f"no profiles in {args.profiles}")
    results = []
    for uid, prof in sorted(profiles.items()):
        if uid not in data:
            raise ConfigError("traces", f"no trace for profile {uid}")
        _, test_ids = impostor_pools(uid, list(data))
        _, test = data[uid].split(cfg.enrollment.train_fraction)
        imp = [data[u].split(cfg.enrollment.train_fraction)[1] for u in test_ids]
        results.extend(verify_and_score(prof, test, imp))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results(out, results)
    algs = tuple(a for a in cfg.evaluation.algorithms if any(r.algorithm == a for r in results))
    write_summary(out, aggregate(results, algs or None))
    print(f"wrote {len(results)} results to {out}")


def cmd_compare(args):
    summary = read_summary(args.summary)
    report = compare_classifiers(summary)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_comparison(out, report)
    print(f"wrote {len(report.rows)} pairs to {out}")


def cmd_fte(args):
    cfg = _config(args)
    summary = read_summary(args.summary)
    outcomes = failure_to_enroll(summary, cfg.evaluation.fte_fractions)
    write_fte(args.out_dir, outcomes)
    print(f"wrote failure-to-enroll tables to {args.out_dir}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    import numba
    import numpy
    import scipy

    return {"ctxauth": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "pyyaml": yaml.__version__}


def _run_dir(base: Path, seed: int) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run = base / f"run-{stamp}-seed{seed}"
    n = 1
    while run.exists():
        n += 1
        run = base / f"run-{stamp}-seed{seed}-{n}"
    run.mkdir(parents=True)
    return run


def cmd_run_all(args):
    cfg = _config(args)
    run = _run_dir(Path(args.out_dir), cfg.seed)
    log.info("run directory %s", run)
    if args.traces:
        files = _trace_files(args.traces)
        traces = [load_trace(p) for p in files]
        inputs = {"kind": "traces", "dir": str(Path(args.traces).resolve()),
                  "files": {p.name: _sha256(p) for p in files}}
    else:
        traces = _synthesize(cfg, run)
        inputs = {"kind": "synthetic", "synth": asdict(cfg.synth), "seed": cfg.seed}
    data = _prepare_all(traces, cfg)
    outcome = run_population(data, cfg)
    (run / "profiles").mkdir()
    for uid, prof in outcome.profiles.items():
        save_profile(prof, run / "profiles" / f"{uid}.json")
    write_cluster_summary(run / "clusters.csv", outcome.profiles)
    write_json(run / "skipped.json", outcome.failures)
    if outcome.summary is None:
        raise RuntimeError("no user could be enrolled and evaluated")
    write_results(run, outcome.results)
    write_summary(run, outcome.summary)
    files = ["results.csv", "summary.csv", "population.csv"]
    try:
        report = compare_classifiers(outcome.summary)
        write_comparison(run / "comparison.csv", report)
        files.append("comparison.csv")
    except ValueError as exc:
        log.warning("classifier comparison skipped: %s", exc)
    try:
        write_fte(run / "fte", failure_to_enroll(outcome.summary, cfg.evaluation.fte_fractions))
        files.append("fte/fte_summary.csv")
    except ValueError as exc:
        log.warning("failure-to-enroll analysis skipped: %s", exc)
    manifest = {
        "command": "run-all",
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "inputs": inputs,
        "versions": _versions(),
        "skipped_users": outcome.failures,
        "outputs": {f: _sha256(run / f) for f in files},
    }
    write_json(run / "manifest.json", manifest)
    for alg in outcome.summary.algorithms:
        print(f"{alg:7s} mean EER {outcome.summary.mean(alg):.4f} (sd {outcome.summary.std(alg):.4f})")
    print(f"run written to {run}")
    return run


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctxauth", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML/JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--algorithms", help="comma-separated subset of LOGREG,MLP,KNN,SVM,RF")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key, e.g. context.k=6 (repeatable)")

    sp = sub.add_parser("synth", help="generate a synthetic trace population")
    common(sp)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--n-users", type=int)
    sp.add_argument("--distinctiveness", type=float)
    sp.add_argument("--attended-minutes", type=float)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("enroll", help="enroll every user of a trace directory")
    common(sp)
    sp.add_argument("--traces", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_enroll)

    sp = sub.add_parser("evaluate", help="score held-out windows against saved profiles")
    common(sp)
    sp.add_argument("--profiles", required=True)
    sp.add_argument("--traces", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare", help="pairwise classifier tests from a summary file")
    sp.add_argument("--summary", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("fte", help="failure-to-enroll CDF tables from a summary file")
    common(sp)
    sp.add_argument("--summary", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_fte)

    sp = sub.add_parser("run-all", help="synthesize (or load), enroll, evaluate and report")
    common(sp)
    sp.add_argument("--traces", help="use these traces instead of a synthetic population")
    sp.add_argument("--out-dir", default="runs")
    sp.set_defaults(func=cmd_run_all)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"ConfigError({exc.key!r}): {exc}", file=sys.stderr)
        return 1
    except (TraceError, SerializationError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
