#!/usr/bin/env python3
"""Exact, firefront and avatar side by side on seeded random multistable models."""

import argparse
import math

import numpy as np

from attrq.avatar import AvatarConfig, avatar_run
from attrq.firefront import FirefrontConfig, firefront_run
from attrq.genrand import random_multistable
from attrq.markov import exact_run
from attrq.parser import InitialSpec, ModelDocument


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--models", type=int, default=20)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--runs", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("model  |S|  attr  exact_s  ff_s  ff_resid  avatar_s  max_gap  max_gap/sigma")
    for i in range(args.models):
        rng = np.random.default_rng([args.seed, i])
        model = random_multistable(args.n, args.k, rng)
        v0 = int(rng.integers(model.n_states))
        doc = ModelDocument(model, InitialSpec(fixed=dict(enumerate(model.decode(v0)))), name=f"random{i}")
        exact = exact_run(doc)
        ff = firefront_run(doc, FirefrontConfig(max_iterations=1000)).result
        av = avatar_run(doc, AvatarConfig(runs=args.runs, seed=i)).result
        got = {e.attractor.states: e.probability for e in av.attractors}
        gap = zs = 0.0
        for e in exact.attractors:
            d = abs(got.get(e.attractor.states, 0.0) - e.probability)
            sd = math.sqrt(e.probability * (1 - e.probability) / args.runs)
            gap = max(gap, d)
            zs = max(zs, d / sd if sd else 0.0)
        print(f"{i:>5}  {model.n_states:>4}  {len(exact.attractors):>4}  {exact.wall_time_s:>7.3f}  "
              f"{ff.wall_time_s:>5.2f}  {ff.residual:>8.1e}  {av.wall_time_s:>8.2f}  {gap:>7.4f}  {zs:>13.2f}")


if __name__ == "__main__":
    main()
