"""RNG-free stationary moments of the one-dimensional proximal Langevin kernel.

The chain on the separable quartic factorizes per coordinate, and in one
dimension the kernel x' = prox(x) + sqrt(2 tau) * xi has the explicit
transition density N(x'; r(x), 2 tau) with r(x) the real root of
tau y^3 + y = x.  Discretizing that density on a grid and power-iterating
gives the stationary law of the discretized kernel to quadrature accuracy,
with no Monte Carlo noise at all.  The script prints the per-coordinate
stationary E[Y^2] for a few step sizes; these values are frozen into the
test suite as the expected (biased) sampler output at finite tau.

Everything here is written against numpy only, independently of the package
under test: the prox root comes from numpy.roots per grid node rather than
the package's Newton solver.

Run:  python3 tests/oracles/transfer_operator.py
"""

import numpy as np

LO, HI = -8.0, 8.0
N_GRID = 4001


def prox_root(x: float, tau: float) -> float:
    """Real root of tau*y^3 + y - x = 0 (unique since tau > 0)."""
    roots = np.roots([tau, 0.0, 1.0, -x])
    real = roots[np.abs(roots.imag) < 1e-9].real
    # the cubic is strictly increasing, exactly one real root
    return float(real[0])


def stationary_second_moment(tau: float) -> float:
    grid = np.linspace(LO, HI, N_GRID)
    h = grid[1] - grid[0]
    w = np.full(N_GRID, h)
    w[0] = w[-1] = h / 2.0  # trapezoid weights

    centers = np.array([prox_root(x, tau) for x in grid])
    var = 2.0 * tau
    # K[i, j]: density of moving from grid[j] to grid[i], times weight[i]
    diff = grid[:, None] - centers[None, :]
    K = np.exp(-diff**2 / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)
    K *= w[:, None]

    pi = np.exp(-grid**4 / 4.0)
    pi /= pi @ w
    for _ in range(20000):
        nxt = K @ pi
        nxt /= nxt @ w
        if np.max(np.abs(nxt - pi)) < 1e-14:
            pi = nxt
            break
        pi = nxt
    return float((grid**2 * pi) @ w)


def main():
    truth = 0.6759777  # 2*Gamma(3/4)/Gamma(1/4), quadrature oracle
    for tau in (0.1, 0.05, 0.025):
        m2 = stationary_second_moment(tau)
        print(f"tau={tau}: per-coordinate stationary E[Y^2] = {m2:.6f} "
              f"(relative bias vs exact {abs(m2 - truth) / truth:.4f})")


if __name__ == "__main__":
    main()
