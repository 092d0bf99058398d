"""Non-asymptotic constants and step/iteration budgets for the proximal chain.

Everything here is a closed-form evaluation, no sampling involved. The
central object is the chain moment constant ``moment_constant(m, ti)``,
normalized so that E|X_k|^m <= C_m d^(m/2) uniformly in k for a chain run
with the inputs ``ti``. On top of it sit:

``k_tau``          the per-step discretization penalty K(tau), with the
                   companion bound C_q * tau * d^((q+1)/2) valid for tau <= 1;
``c_of_nu``        the inexactness penalty constant C(nu) with the target's
                   moments bounded through the chain moment constants;
``kl_budget``      step size and iteration count guaranteeing KL error eps
                   for the averaged measure;
``w2_budget``      the sharper budget available when V is globally strongly
                   convex (r_v = 0, lambda_v > 0);
``w2_bias_bound``  the finite-k squared Wasserstein bound in that regime.

Inputs are bundled in the hashable :class:`TheoryInputs`, so the moment
constants memoize cleanly; the proximal accuracy is always the schedule
delta = kappa * tau**(1 + alpha).
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

from scipy.optimize import brentq
from scipy.special import gamma as _gamma

__all__ = [
    "TheoryInputs",
    "KTau",
    "KLBudget",
    "W2Budget",
    "noise_moment_constant",
    "moment_constant",
    "k_tau",
    "c_of_nu",
    "kl_budget",
    "w2_budget",
    "w2_bias_bound",
]


class TheoryInputs(NamedTuple):
    """Chain parameters the constants depend on."""

    d: int
    lambda_v: float = 0.0
    r_v: float = 0.0
    kappa: float = 1.0
    alpha: float = 1.0
    tau: float = 0.1
    m0: float = 0.0  # E|X_0|^2 of the (deterministic) start


class KTau(NamedTuple):
    value: float
    remark_bound: float  # C_q * tau * d^((q+1)/2), valid whenever tau <= 1


class KLBudget(NamedTuple):
    tau_eps: float
    n_eps: int
    c_nu: float
    k_at_tau: float


class W2Budget(NamedTuple):
    tau_eps: float
    n_eps: int
    k_at_tau: float
    n_max: float  # the guarantee tolerates any count up to this


def _check_inputs(ti: TheoryInputs):
    if ti.d < 1:
        raise ValueError(f"d must be >= 1, got {ti.d}")
    if ti.lambda_v < 0 or ti.r_v < 0 or ti.kappa < 0 or ti.m0 < 0:
        raise ValueError("lambda_v, r_v, kappa and m0 must be nonnegative")
    if ti.alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {ti.alpha}")
    if not ti.tau > 0:
        raise ValueError(f"tau must be positive, got {ti.tau}")


def noise_moment_constant(m: float) -> float:
    """Absolute m-th moment constant of the injected Gaussian noise."""
    if m < 0:
        raise ValueError(f"m must be nonnegative, got {m}")
    if m == 0:
        return 1.0
    if m < 2:
        return 2.0 ** (m / 2.0)
    return float(4.0 ** (m / 2.0) * _gamma((1.0 + m) / 2.0) / _gamma(0.5))


@lru_cache(maxsize=None)
def moment_constant(m: float, ti: TheoryInputs) -> float:
    """Uniform-in-k chain moment constant: E|X_k|^m <= C_m d^(m/2)."""
    _check_inputs(ti)
    if m < 0:
        raise ValueError(f"m must be nonnegative, got {m}")
    d, lam, r, kappa, alpha, tau, m0 = ti
    delta = kappa * tau ** (1.0 + alpha)

    if m <= 2:
        base = (
            36.0 * kappa ** 2 / d
            + lam ** 2 / d * m0
            + (16.0 * kappa * delta + 4.0 * r ** 2 * lam + 4.0 * delta * r * lam + 8.0 * d)
            / d
            * lam
        )
        return base ** (m / 2.0)

    if lam <= 0:
        raise ValueError(
            f"moment_constant needs lambda_v > 0 for orders above 2 (m={m})"
        )
    fm = math.floor(m)
    a = m - fm
    c_a = moment_constant(a, ti)
    c = m ** 2 * 2.0 ** m
    a0 = m0 ** (fm / 2.0)
    bracket = (
        2.0 ** fm * c ** fm * kappa ** fm * d ** (-fm / 2.0)
        + (fm - 1) * 2.0 * c * (2.0 * kappa * delta + 4.0 * d) / d
        + d ** (-fm / 2.0) * lam ** fm * (a0 + r ** fm)
        + c
        * d ** (-fm / 2.0)
        * lam ** (fm - 1)
        * (
            r ** (fm - 1)
            + 2.0 * (2.0 * kappa * delta + 4.0 * d) * r ** (fm - 2) / lam
            + 2.0 ** fm * kappa * delta ** (fm - 1)
        )
        + c_a * 2.0 ** fm * noise_moment_constant(m) * lam ** (fm / 2.0)
    )
    return c_a * bracket


def _lambda_power(lam: float, q: float) -> float:
    """lambda_v^(-(q-1)/2), with the q = 1 case exact even at lambda_v = 0."""
    if q == 1:
        return 1.0
    if lam <= 0:
        raise ValueError("lambda_v must be positive when q_v > 1")
    return lam ** (-(q - 1.0) / 2.0)


def k_tau(ti: TheoryInputs, q_v: float, l_q: float) -> KTau:
    """Per-step discretization penalty K(tau) and its small-tau envelope."""
    _check_inputs(ti)
    if q_v < 1:
        raise ValueError(f"q_v must be >= 1, got {q_v}")
    if l_q <= 0:
        raise ValueError(f"l_q must be positive, got {l_q}")
    d, lam, tau = ti.d, ti.lambda_v, ti.tau
    lead = 2.0 ** (4.0 * q_v - 3.0) * l_q
    lam_pow = _lambda_power(lam, q_v)
    c_lo = moment_constant(q_v - 1.0, ti)
    c_hi = moment_constant(q_v + 1.0, ti)
    value = lead * (
        (1.0 + c_lo * d ** ((q_v - 1.0) / 2.0) * lam_pow) * 2.0 * d * tau
        + c_hi * d ** ((q_v + 1.0) / 2.0) * tau ** ((q_v + 1.0) / 2.0)
    )

    ti1 = ti._replace(tau=1.0)
    const = lead * (
        2.0 * (1.0 + moment_constant(q_v - 1.0, ti1) * lam_pow)
        + moment_constant(q_v + 1.0, ti1)
    )
    remark = const * tau * d ** ((q_v + 1.0) / 2.0)
    return KTau(value=value, remark_bound=remark)


def c_of_nu(ti: TheoryInputs, q_v: float, c_v: float) -> float:
    """Inexactness penalty constant C(nu) at the target measure.

    The target's moments nu(|.|^m) are bounded by C_m d^(m/2); the whole
    expression is evaluated at tau = 1, which dominates every tau <= 1, so
    the returned constant can be treated as tau-free in the budgets.
    """
    _check_inputs(ti)
    if q_v < 1:
        raise ValueError(f"q_v must be >= 1, got {q_v}")
    if c_v <= 0:
        raise ValueError(f"c_v must be positive, got {c_v}")
    ti1 = ti._replace(tau=1.0)
    d, lam, kappa = ti.d, ti.lambda_v, ti.kappa

    def nu(m: float) -> float:
        return moment_constant(m, ti1) * d ** (m / 2.0)

    inv = 1.0 if lam == 0 else min(1.0, 1.0 / lam)
    c1 = moment_constant(1.0, ti1)
    return (
        c_v * (nu(1.0) + nu(q_v) * kappa + kappa * nu(q_v - 1.0) + kappa ** q_v)
        + 2.0 * (nu(1.0) + c1 * inv * math.sqrt(d) + kappa)
    )


def _largest_tau_with(ti: TheoryInputs, q_v: float, l_q: float,
                      target: float, cap: float) -> float:
    """Largest tau <= cap with K(tau) <= target; K is increasing in tau."""

    def excess(tau: float) -> float:
        return k_tau(ti._replace(tau=tau), q_v, l_q).value - target

    if excess(cap) <= 0:
        return cap
    lo = cap * 1e-12
    if excess(lo) > 0:
        raise ValueError(
            f"accuracy target {target:.3e} is below the reachable range of K(tau)"
        )
    return float(brentq(excess, lo, cap, xtol=1e-15, rtol=1e-12))


def kl_budget(ti: TheoryInputs, q_v: float, c_v: float, l_q: float,
              w2_init: float, eps: float) -> KLBudget:
    """Step size and iteration count for KL error at most eps.

    Three constraints on tau are intersected: the inexactness penalty
    C(mu*) kappa tau^alpha <= eps/3, the discretization penalty
    K(tau) <= eps/3, and tau <= 1 (strictly below 1/lambda_v when the
    potential is strongly convex). The iteration count then clears the
    transient term: n >= 3 w2_init / (2 eps tau).
    """
    _check_inputs(ti)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if w2_init <= 0:
        raise ValueError(f"w2_init must be positive, got {w2_init}")
    if ti.alpha <= 0:
        raise ValueError("the accuracy schedule needs alpha > 0")
    c_nu = c_of_nu(ti, q_v, c_v)
    cap = 1.0
    if ti.lambda_v > 0:
        cap = min(cap, math.nextafter(1.0 / ti.lambda_v, 0.0))
    if ti.kappa > 0:
        cap = min(cap, (eps / (3.0 * c_nu * ti.kappa)) ** (1.0 / ti.alpha))
    tau_eps = _largest_tau_with(ti, q_v, l_q, eps / 3.0, cap)
    n_eps = math.ceil(3.0 * w2_init / (2.0 * eps * tau_eps))
    k_val = k_tau(ti._replace(tau=tau_eps), q_v, l_q).value
    return KLBudget(tau_eps=tau_eps, n_eps=n_eps, c_nu=c_nu, k_at_tau=k_val)


def w2_budget(ti: TheoryInputs, q_v: float, l_q: float,
              w2_init: float, eps: float) -> W2Budget:
    """Step size and iteration count for squared Wasserstein error <= eps.

    Only available in the globally strongly convex regime (r_v = 0,
    lambda_v > 0) and for eps < 6 w2_init, where the required contraction
    horizon L = log(6 w2_init / eps) is positive.
    """
    _check_inputs(ti)
    if ti.r_v != 0:
        raise ValueError("w2_budget needs r_v = 0 (globally convex case)")
    if ti.lambda_v <= 0:
        raise ValueError("w2_budget needs lambda_v > 0")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if w2_init <= 0:
        raise ValueError(f"w2_init must be positive, got {w2_init}")
    lam = ti.lambda_v
    big_l = math.log(6.0 * w2_init / eps)
    if big_l <= 0:
        raise ValueError(
            f"eps={eps} is no tighter than the start (needs eps < 6*w2_init)"
        )
    cap = min(1.0, math.nextafter(1.0 / lam, 0.0))
    if ti.kappa > 0:
        if ti.alpha > 0:
            cap = min(
                cap,
                (lam ** 2 * eps / (96.0 * ti.kappa ** 2 * big_l ** 2))
                ** (1.0 / (2.0 * ti.alpha)),
            )
        elif lam ** 2 * eps < 96.0 * ti.kappa ** 2 * big_l ** 2:
            raise ValueError(
                "with alpha = 0 the inexactness floor kappa^2 exceeds this eps"
            )
    tau_eps = _largest_tau_with(ti, q_v, l_q, lam * eps / 12.0, cap)
    n_lower = 2.0 * big_l / (tau_eps * lam)
    k_val = k_tau(ti._replace(tau=tau_eps), q_v, l_q).value
    return W2Budget(
        tau_eps=tau_eps,
        n_eps=math.ceil(n_lower),
        k_at_tau=k_val,
        n_max=2.0 * n_lower,
    )


def w2_bias_bound(ti: TheoryInputs, q_v: float, l_q: float,
                  k: int, w2_init: float) -> float:
    """Squared Wasserstein distance to target after k steps (upper bound)."""
    _check_inputs(ti)
    if ti.r_v != 0:
        raise ValueError("w2_bias_bound needs r_v = 0 (globally convex case)")
    lam, tau, kappa, alpha = ti.lambda_v, ti.tau, ti.kappa, ti.alpha
    if lam <= 0:
        raise ValueError("w2_bias_bound needs lambda_v > 0")
    if tau >= 1.0 / lam:
        raise ValueError(f"needs tau < 1/lambda_v = {1.0 / lam}, got {tau}")
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    if w2_init < 0:
        raise ValueError(f"w2_init must be nonnegative, got {w2_init}")
    contraction = 2.0 * (1.0 - tau * lam / 2.0) ** k * w2_init
    discretization = 4.0 / lam * k_tau(ti, q_v, l_q).value
    if k <= 1:
        inexactness = 0.0
    else:
        ratio = (1.0 - math.exp(-lam * tau * (k - 1))) / (1.0 - math.exp(-lam * tau))
        inexactness = 2.0 * kappa ** 2 * tau ** (2.0 + 2.0 * alpha) * ratio ** 2
    return contraction + discretization + inexactness
