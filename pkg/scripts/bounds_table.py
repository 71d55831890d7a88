"""Print the sensitivity-bound comparison: discretized communication keeps a
G ln L dependency while the continuous bound scales with m ln(4 sqrt(nm))."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vqcomm.theory import (
    BoundInputs,
    covering_bound_with,
    covering_bound_without,
    bound_with_discretization,
    bound_without_discretization,
)


def main():
    inputs = BoundInputs(G=15, L=30, m=64, n=10_000, delta=0.05, alpha=1.0, varsigma_bar=0.5, R_H=1.0)
    print(f"n = {inputs.n}, delta = {inputs.delta}, alpha = {inputs.alpha}")
    print(f"with discretization    (G={inputs.G}, L={inputs.L}): {bound_with_discretization(inputs):.5f}")
    print(f"without discretization (m={inputs.m}):               {bound_without_discretization(inputs):.5f}")

    cover = BoundInputs(L=4, G=2, m=8, zeta=100, n=10_000, delta=0.05, C_J=1.0, L_d=1.0, rho=1)
    print(f"covering form, with    (L={cover.L}, G={cover.G}):   {covering_bound_with(cover):.5f}")
    print(f"covering form, without (m={cover.m}):                {covering_bound_without(cover):.1f}  (vacuous)")


if __name__ == "__main__":
    main()
