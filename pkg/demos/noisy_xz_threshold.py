"""Noisy X/Z measurements become jointly measurable at visibility 1/sqrt(2).

Scans the visibility, reports the compatibility verdict and robustness, then
bisects the flip point.
"""

import numpy as np

from pmdkit import generators, jointmeas, robustness


def main():
    print(f"{'eta':>6}  {'verdict':>10}  {'robustness':>12}")
    for eta in np.linspace(0.5, 1.0, 11):
        pmd = generators.noisy_mub(eta)
        simple = jointmeas.check_simple(pmd).is_simple
        r = robustness.robustness(pmd)
        print(f"{eta:6.3f}  {'simple' if simple else 'not simple':>10}  {r:12.8f}")

    lo, hi = 0.5, 1.0
    while hi - lo > 1e-7:
        mid = 0.5 * (lo + hi)
        if jointmeas.check_simple(generators.noisy_mub(mid)).is_simple:
            lo = mid
        else:
            hi = mid
    print(f"\nflip point {0.5 * (lo + hi):.7f}, 1/sqrt(2) = {1 / np.sqrt(2):.7f}")


if __name__ == "__main__":
    main()
