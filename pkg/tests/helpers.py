"""Independent flat transcriptions of the constants formulas.

These functions are a second, deliberately separate implementation of the
closed-form constants that ``proxlmc.theory`` computes: no caching, no
shared code, plain ``math`` arithmetic, transcribed directly from the
source formulas rather than from the package.  The theory tests compare
the two implementations pointwise (double entry); a transcription slip in
either copy shows up as a mismatch.
"""

import math


def noise_constant(m: float) -> float:
    """Bound constant for E|Z|^m with Z ~ N(0, 2*tau*Id), in units of (tau*d)^(m/2)."""
    if m < 0:
        raise ValueError(m)
    if m == 0:
        return 1.0
    if m < 2:
        return 2.0 ** (m / 2.0)  # Jensen from the m = 2 case
    return 4.0 ** (m / 2.0) * math.gamma((1.0 + m) / 2.0) / math.gamma(0.5)


def chain_moment_constant(m: float, d: int, lam: float, r: float,
                          kappa: float, alpha: float, tau: float, m0: float) -> float:
    """Uniform-in-k bound constant for E|X_k|^m, in units of d^(m/2)."""
    if m < 0:
        raise ValueError(m)
    delta = kappa * tau ** (1.0 + alpha)
    if m <= 2:
        base = (36.0 * kappa ** 2 / d
                + lam ** 2 / d * m0
                + (16.0 * kappa * delta + 4.0 * r ** 2 * lam
                   + 4.0 * delta * r * lam + 8.0 * d) / d * lam)
        return base ** (m / 2.0)
    if lam <= 0.0:
        raise ValueError("m > 2 requires lam > 0")
    fm = math.floor(m)
    a = m - fm
    c = m ** 2 * 2.0 ** m
    c_a = chain_moment_constant(a, d, lam, r, kappa, alpha, tau, m0)
    a0 = m0 ** (fm / 2.0)
    term1 = 2.0 ** fm * c ** fm * kappa ** fm * d ** (-fm / 2.0)
    term2 = (fm - 1) * 2.0 * c * (2.0 * kappa * delta + 4.0 * d) / d
    term3 = d ** (-fm / 2.0) * lam ** fm * (a0 + r ** fm)
    term4 = (c * d ** (-fm / 2.0) * lam ** (fm - 1)
             * (r ** (fm - 1)
                + 2.0 * (2.0 * kappa * delta + 4.0 * d) * r ** (fm - 2) / lam
                + 2.0 ** fm * kappa * delta ** (fm - 1)))
    term5 = c_a * 2.0 ** fm * noise_constant(m) * lam ** (fm / 2.0)
    return c_a * (term1 + term2 + term3 + term4 + term5)


def k_tau_formula(d: int, q: float, lam: float, r: float, l_q: float,
                  kappa: float, alpha: float, tau: float, m0: float) -> float:
    """Per-step discretization constant K(tau)."""
    c_lo = chain_moment_constant(q - 1.0, d, lam, r, kappa, alpha, tau, m0)
    c_hi = chain_moment_constant(q + 1.0, d, lam, r, kappa, alpha, tau, m0)
    if q == 1.0:
        lam_pow = 1.0  # exponent collapses to zero
    else:
        if lam <= 0.0:
            raise ValueError("q > 1 requires lam > 0")
        lam_pow = lam ** (-(q - 1.0) / 2.0)
    return (2.0 ** (4.0 * q - 3.0) * l_q
            * ((1.0 + c_lo * d ** ((q - 1.0) / 2.0) * lam_pow) * 2.0 * d * tau
               + c_hi * d ** ((q + 1.0) / 2.0) * tau ** ((q + 1.0) / 2.0)))


def c_of_nu_formula(d: int, q: float, c_v: float, lam: float, r: float,
                    kappa: float, alpha: float, m0: float) -> float:
    """Drift constant C(nu) with nu-moments taken from the chain bound at tau = 1."""
    tau = 1.0
    delta = kappa * tau ** (1.0 + alpha)

    def nu(m: float) -> float:
        return (chain_moment_constant(m, d, lam, r, kappa, alpha, tau, m0)
                * d ** (m / 2.0))

    lam_inv = 1.0 if lam == 0.0 else min(1.0, 1.0 / lam)
    c1 = chain_moment_constant(1.0, d, lam, r, kappa, alpha, tau, m0)
    return (c_v * (nu(1.0) + nu(q) * delta + delta * nu(q - 1.0) + delta ** q) * tau
            + 2.0 * (nu(1.0) + c1 * lam_inv * math.sqrt(d) + delta))
