"""The BB84 guessing game separates sharp X/Z measurements from every simple PMD.

Sharp X/Z wins with certainty; the best simple PMD reaches (2 + sqrt(2))/4.
The robustness witness game reproduces the ratio 1 + r.
"""

import numpy as np

from pmdkit import games, generators, robustness


def main():
    pmd = generators.sharp_xz()
    game = generators.bb84_game()
    print(f"sharp X/Z on BB84:        {games.pguess_classical(pmd, game).value:.10f}")
    print(f"best simple PMD on BB84:  {games.pguess_simple(game).value:.10f}")
    print(f"(2 + sqrt 2)/4:           {(2 + np.sqrt(2)) / 4:.10f}")

    rep = robustness.verify_theorem2(pmd)
    print(f"\nrobustness r:             {rep.robustness:.10f}")
    print(f"witness payoff ratio:     {rep.ratio:.10f}")
    print(f"1 + r:                    {1 + rep.robustness:.10f}")
    print(f"agreement:                {rep.difference:.2e}")


if __name__ == "__main__":
    main()
