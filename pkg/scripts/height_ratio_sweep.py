#!/usr/bin/env python3
"""TS-regret ratios of HierTS and FlatTS across tree heights.

Ratios above one mean the agent beats independent-arm TS; the gain should
grow with height, and faster under the doubling prior.
"""
import argparse
from pathlib import Path

import numpy as np

from hierts.harness import RunConfig, ratio_experiment, write_ratio_csv
from hierts.svgchart import write_line_chart


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/heights")
    ap.add_argument("--scheme", choices=("constant", "doubling"), default="constant")
    ap.add_argument("--branching", type=int, default=2)
    ap.add_argument("--heights", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--horizon", type=int, default=500)
    ap.add_argument("--instances", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = RunConfig(
        branching=args.branching,
        height=args.heights[0],
        prior_scheme=args.scheme,
        prior_value=1.0,
        noise_std=1.0,
        horizon=args.horizon,
        instances=args.instances,
        seed=args.seed,
    )
    result = ratio_experiment(cfg, tuple(args.heights), jobs=args.jobs)
    write_ratio_csv(result, out / f"ratios_{args.scheme}.csv")
    hs = np.asarray(result.heights, float)
    series = [
        {"name": k, "x": hs, "y": result.ratio[k], "band": result.se[k]}
        for k in result.agents
    ]
    write_line_chart(
        out / f"ratios_{args.scheme}.svg",
        series,
        title=f"{args.scheme} prior, b={args.branching}",
        x_label="tree height",
        y_label="TS regret / agent regret",
    )
    for k in result.agents:
        pairs = "  ".join(
            f"h={h}: {r:.3f}+-{s:.3f}"
            for h, r, s in zip(result.heights, result.ratio[k], result.se[k])
        )
        print(f"{k}: {pairs}")


if __name__ == "__main__":
    main()
