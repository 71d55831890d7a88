"""Where-to-discretize ablation on the adding task: communication result vs
recurrent update, plus nearest-neighbor (VQ) vs Gumbel-Softmax selection."""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vqcomm.protocols import adding_config
from vqcomm.runner import emit_csv, run

ARMS = {
    "communication_result": dict(site="communication_result", method="vq"),
    "recurrent_update": dict(site="recurrent_update", method="vq"),
    "gumbel": dict(site="communication_result", method="gumbel"),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--out", default="ablation")
    args = ap.parse_args()

    rows = []
    for arm, overrides in ARMS.items():
        for seed in range(args.seeds):
            record = run(adding_config(seed, discretize=True, **overrides))
            row = {"arm": arm, "seed": seed}
            for split, metrics in record.final.items():
                row[split] = metrics["loss"]
            rows.append(row)
            print(f"{arm} seed {seed}: ood_test={row['ood_test']:.4f}")

    emit_csv(f"{args.out}.csv", rows, ["arm", "seed", "in_dist", "ood_val", "ood_test"])
    med = {
        arm: np.median([r["ood_test"] for r in rows if r["arm"] == arm]) for arm in ARMS
    }
    for arm, value in med.items():
        print(f"{arm}: median ood_test = {value:.4f}")
    vq = [r["ood_test"] for r in rows if r["arm"] == "communication_result"]
    gb = [r["ood_test"] for r in rows if r["arm"] == "gumbel"]
    wins = sum(v <= g for v, g in zip(vq, gb))
    print(f"vq beats gumbel in {wins}/{len(vq)} seeds")
    print(f"wrote {args.out}.csv")


if __name__ == "__main__":
    main()
