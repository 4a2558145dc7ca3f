#!/usr/bin/env python3
"""Generate the synthetic clustered dataset and its tree file.

Writes data.csv and tree.json into --out, ready for
`hierts classify-bandit --dataset .../data.csv --hierarchy .../tree.json`.
"""
import argparse
from pathlib import Path

import numpy as np

from hierts.envs import make_cluster_dataset, write_dataset_csv
from hierts.hierarchy import save_tree_json


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/cluster")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--groups", type=int, default=5)
    ap.add_argument("--classes-per-group", type=int, default=5)
    ap.add_argument("--dim", type=int, default=10)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, hierarchy, label_map = make_cluster_dataset(
        np.random.default_rng(args.seed),
        num_groups=args.groups,
        classes_per_group=args.classes_per_group,
        dim=args.dim,
    )
    write_dataset_csv(out / "data.csv", dataset, label_map)
    save_tree_json(out / "tree.json", hierarchy, label_map=label_map)
    print(f"wrote {out / 'data.csv'} ({dataset.features.shape[0]} rows) and {out / 'tree.json'}")


if __name__ == "__main__":
    main()
