"""Adding-task OOD study: continuous baseline vs discretized communication.

Trains the modular recurrent model with gap length 50 and evaluates at gap
100, over several seeds; reports per-seed and median OOD losses.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vqcomm.protocols import adding_config
from vqcomm.runner import emit_csv, run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--out", default="adding_ood")
    args = ap.parse_args()

    rows = []
    for variant, discretize in (("baseline", False), ("discretized", True)):
        for seed in range(args.seeds):
            record = run(adding_config(seed, discretize))
            row = {"variant": variant, "seed": seed}
            for split, metrics in record.final.items():
                row[split] = metrics["loss"]
            rows.append(row)
            print(f"{variant} seed {seed}: ood_test={row['ood_test']:.4f}")

    emit_csv(f"{args.out}.csv", rows, ["variant", "seed", "in_dist", "ood_val", "ood_test"])
    for variant in ("baseline", "discretized"):
        ood = [r["ood_test"] for r in rows if r["variant"] == variant]
        print(f"{variant}: median ood_test = {np.median(ood):.4f}")
    print(f"wrote {args.out}.csv")


if __name__ == "__main__":
    main()
