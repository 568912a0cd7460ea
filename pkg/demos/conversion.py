"""Converting between PMDs.

A target built from the source by classical processing is recovered by the
LP. Sharp X/Z cannot be produced from a simple PMD, and the LP returns a
guessing game proving it. Any two simple PMDs convert into each other.
"""

import numpy as np

from pmdkit import convert, generators
from pmdkit.devices import apply_free_operation, classical_operation


def main():
    rng = np.random.default_rng(0)
    src = generators.noisy_mub(0.9)
    # target: run program x, relabel, with a coin flip choosing which program
    strategies = [([0, 1], np.array([[0, 0], [1, 1]])), ([1, 0], np.array([[1, 0], [0, 1]]))]
    op = classical_operation(2, [0.3, 0.7], strategies, (2, 2), None, None)
    dst = apply_free_operation(op, src)
    cert = convert.convertibility_lp(src, dst)
    print(f"classical target: {cert.verdict}, reproduction error {cert.margins['reproduction_error']:.2e}")

    simple = generators.noisy_mub(0.6)
    cert = convert.convertibility_lp(simple, generators.sharp_xz())
    print(f"simple -> sharp X/Z: {cert.verdict}, game margin {cert.margins['margin']:.4f}")

    a, da = generators.random_simple_pmd(2, 2, 3, rng=rng)
    b, db = generators.random_simple_pmd(3, 3, 2, rng=rng)
    err = apply_free_operation(convert.simple_interconvert(da, db), a).distance(b)
    print(f"simple qubit -> simple qutrit: reproduction error {err:.2e}")


if __name__ == "__main__":
    main()
