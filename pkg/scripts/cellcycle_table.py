#!/usr/bin/env python3
"""Cell-cycle rows: exact, firefront and avatar on the CycD=1 start and under sampling."""

import argparse
from pathlib import Path

from attrq.avatar import AvatarConfig, avatar_run
from attrq.firefront import FirefrontConfig, firefront_run
from attrq.markov import exact_run
from attrq.parser import load_model
from attrq.results import attractor_ids

MODELS = Path(__file__).resolve().parent.parent / "models"


def describe(result):
    parts = [f"{aid} {e.probability:.2f}" for aid, e in zip(attractor_ids(result), result.sorted_attractors())]
    return ", ".join(parts) or "-"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    cfg = AvatarConfig(runs=args.runs, seed=args.seed, threads=args.threads)

    fixed = load_model(MODELS / "cellcycle.av")
    sampled = load_model(MODELS / "cellcycle_sampling.av")
    print(f"{'setting':<10} {'method':<10} {'time':>9}  result")
    for label, doc in (("CycD=1", fixed), ("sampling", sampled)):
        rows = [("exact", exact_run(doc))]
        if not doc.initial.sampled:  # firefront needs a point start
            rows.append(("firefront", firefront_run(doc, FirefrontConfig(max_iterations=1000)).result))
        rows.append(("avatar", avatar_run(doc, cfg).result))
        for method, res in rows:
            extra = f"  residual {res.residual:.2f}" if res.residual else ""
            print(f"{label:<10} {method:<10} {res.wall_time_s:>8.2f}s  {describe(res)}{extra}")


if __name__ == "__main__":
    main()
