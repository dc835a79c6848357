"""CSV/JSON writers for results, summaries, comparisons and CDF tables.

Floats are written with ``repr`` so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .evaluation import FTEOutcome, PopulationSummary


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, records, columns=None) -> Path:
    path = Path(path)
    records = list(records)
    columns = columns or (list(records[0]) if records else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in records:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def write_results(out_dir, results):
    out_dir = Path(out_dir)
    records = [r.to_record() for r in results]
    cols = ["user_id", "context", "algorithm", "eer", "threshold", "n_genuine", "n_impostor",
            "reused_impostors"]
    write_csv(out_dir / "results.csv", records, cols)
    write_json(out_dir / "results.json", records)


def write_summary(out_dir, summary: PopulationSummary):
    out_dir = Path(out_dir)
    write_csv(out_dir / "summary.csv", summary.to_records(), ["user_id", "algorithm", "mean_eer"])
    write_csv(out_dir / "population.csv", summary.population_records(),
              ["algorithm", "n_users", "mean_eer", "std_eer"])
    write_json(out_dir / "summary.json", {"algorithms": list(summary.algorithms),
                                          "users": summary.to_records(),
                                          "population": summary.population_records()})


def read_summary(path) -> PopulationSummary:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        return PopulationSummary.from_records(doc["users"], tuple(doc["algorithms"]))
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"user_id", "algorithm", "mean_eer"} <= set(rows[0]):
        raise ValueError(f"{path}: expected columns user_id, algorithm, mean_eer")
    return PopulationSummary.from_records(rows)


def write_comparison(path, report):
    cols = ["pair", "ks_p", "friedman_p", "wilcoxon_p", "wilcoxon_w", "errors"]
    write_csv(path, report.to_records(), cols)


def write_fte(out_dir, outcomes: list[FTEOutcome]):
    """One CDF table per (removal fraction, algorithm) plus an overview CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    overview = []
    for o in outcomes:
        pct = int(round(o.fraction * 100))
        for alg in o.summary.algorithms:
            write_csv(out_dir / f"cdf_remove{pct:02d}_{alg}.csv",
                      [{"eer": e, "cumulative_fraction": c} for e, c in o.cdf(alg)],
                      ["eer", "cumulative_fraction"])
            overview.append({"removal_fraction": o.fraction, "n_removed": len(o.removed),
                             "removed_users": " ".join(o.removed), "algorithm": alg,
                             "n_users": int(o.summary.values(alg).size),
                             "mean_eer": o.summary.mean(alg), "std_eer": o.summary.std(alg)})
    write_csv(out_dir / "fte_summary.csv", overview,
              ["removal_fraction", "n_removed", "removed_users", "algorithm", "n_users", "mean_eer", "std_eer"])
    return overview


def write_cluster_summary(path, profiles):
    """Per-user cluster sizes with a retained flag (context distribution table)."""
    rows = []
    for uid in sorted(profiles):
        p = profiles[uid]
        for c, n in enumerate(p.cluster_counts):
            rows.append({"user_id": uid, "cluster": c, "count": int(n),
                         "retained": c in p.retained, "evaluated": c in p.contexts})
    write_csv(path, rows, ["user_id", "cluster", "count", "retained", "evaluated"])
