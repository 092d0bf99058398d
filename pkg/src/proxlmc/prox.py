"""Inexact proximal solvers with certified error bounds.

The proximal map prox_V^tau(x) minimizes phi(y) = V(y) + |y - x|^2 / (2 tau).
Because phi is (1/tau)-strongly convex whenever V is convex, a gradient-norm
test converts into a distance certificate:

    |grad phi(y)| <= delta / tau   implies   |y - prox_V^tau(x)| <= delta.

Every solver reports ``error_bound`` derived from that certificate (or zero
for the closed forms), so callers can trust ``error_bound <= delta`` on
success. On failure a :class:`ProxFailure` carries the best iterate found and
its honest, larger bound.

Solvers
-------
``prox_exact_gaussian``  closed form x / (1 + tau).
``prox_exact_quartic``   per-coordinate cubic root by guarded Newton.
``prox_gd``              backtracking gradient descent on phi.
``prox_newton``          inexact Newton with matrix-free conjugate gradient.
``prox_tv_pdhg``         adaptive primal-dual hybrid gradient for the
                         TV-regularized deconvolution potential.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import potentials
from .potentials import PotentialProfile, UnsupportedOperation

__all__ = [
    "ProxRequest",
    "ProxResult",
    "ProxFailure",
    "prox_exact_gaussian",
    "prox_exact_quartic",
    "prox_gd",
    "prox_newton",
    "prox_tv_pdhg",
    "solve",
]


@dataclass(frozen=True)
class ProxRequest:
    """Inputs of one proximal solve."""

    x: np.ndarray
    tau: float
    delta: float
    max_iterations: int = 500

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        object.__setattr__(self, "x", x)
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.max_iterations < 1:
            raise ValueError(
                f"max_iterations must be >= 1, got {self.max_iterations}"
            )


@dataclass(frozen=True)
class ProxResult:
    """Approximate proximal point with a certified distance bound."""

    point: np.ndarray
    error_bound: float
    iterations: int
    objective: float


class ProxFailure(RuntimeError):
    """Raised when a solver hits its iteration cap before certifying delta.

    The ``best`` attribute holds the best iterate reached, with an honest
    (larger than requested) error bound.
    """

    def __init__(self, message: str, best: ProxResult):
        super().__init__(message)
        self.best = best


def _objective(p: PotentialProfile, x: np.ndarray, y: np.ndarray, tau: float) -> float:
    diff = y - x
    return float(p.value_fn(y) + 0.5 / tau * np.dot(diff, diff))


# ---------------------------------------------------------------------------
# closed forms


def prox_exact_gaussian(req: ProxRequest) -> ProxResult:
    """Proximal map of |x|^2/2: shrink by 1/(1+tau)."""
    y = req.x / (1.0 + req.tau)
    diff = y - req.x
    obj = float(0.5 * np.dot(y, y) + 0.5 / req.tau * np.dot(diff, diff))
    return ProxResult(point=y, error_bound=0.0, iterations=0, objective=obj)


def _quartic_prox_roots(x: np.ndarray, tau: float) -> tuple[np.ndarray, int]:
    """Per-coordinate root of tau*y^3 + y = x, accurate to 1e-14.

    The cubic is strictly increasing, so the root is unique and shares the
    sign of x. Newton from an upper starting point min(|x|, cbrt(|x|/tau))
    decreases monotonically (the function is convex on y >= 0), which makes
    the iteration self-guarding; a clamp at zero catches rounding.
    """
    ax = np.abs(x)
    y = np.minimum(ax, np.cbrt(ax / tau))
    sweeps = 0
    for _ in range(80):
        f = tau * y ** 3 + y - ax
        if np.all(np.abs(f) <= 1e-14):
            break
        y = y - f / (3.0 * tau * y * y + 1.0)
        np.maximum(y, 0.0, out=y)
        sweeps += 1
    return np.copysign(y, x), sweeps


def prox_exact_quartic(req: ProxRequest) -> ProxResult:
    """Proximal map of sum x_i^4/4 via the per-coordinate cubic."""
    y, sweeps = _quartic_prox_roots(req.x, req.tau)
    diff = y - req.x
    obj = float(0.25 * np.sum(y ** 4) + 0.5 / req.tau * np.dot(diff, diff))
    err = float(np.sqrt(req.x.size)) * 1e-14
    return ProxResult(point=y, error_bound=err, iterations=sweeps, objective=obj)


# ---------------------------------------------------------------------------
# iterative solvers for smooth potentials


def _require_smooth(p: PotentialProfile):
    if not p.smooth or p.gradient_fn is None:
        raise UnsupportedOperation(
            f"potential '{p.name}' has no gradient; use the pdhg solver"
        )


def prox_gd(req: ProxRequest, p: PotentialProfile) -> ProxResult:
    """Backtracking gradient descent on phi, started from y = x.

    Starting at x makes phi(y0) = V(x), so the objective-descent invariant
    holds at every iterate. Terminates as soon as the gradient certificate
    reaches delta; with a huge delta that can be before the first step.
    """
    _require_smooth(p)
    x, tau, delta = req.x, req.tau, req.delta
    target = delta / tau

    y = x.copy()
    grad = p.gradient_fn(y)  # quadratic term vanishes at y = x
    gnorm = float(np.linalg.norm(grad))
    obj = float(p.value_fn(y))
    if gnorm <= target:
        return ProxResult(point=y, error_bound=tau * gnorm, iterations=0, objective=obj)

    step = tau / (1.0 + tau)
    best_y, best_gnorm, best_obj = y, gnorm, obj
    for it in range(1, req.max_iterations + 1):
        # Armijo backtracking on phi. Near the optimum the true decrease sinks
        # below the float resolution of phi itself; in that regime the test
        # switches to strict gradient-norm contraction, which stays resolvable
        # all the way down (phi is strongly convex, so small enough steps
        # contract the gradient).
        plateau = 16.0 * np.finfo(np.float64).eps * max(abs(obj), 1.0)
        step = min(step * 2.0, 1e12)
        accepted = False
        fallback = None  # (gnorm, point, objective, gradient, step)
        while step >= 1e-18:
            cand = y - step * grad
            diff = cand - x
            cand_obj = float(p.value_fn(cand) + 0.5 / tau * np.dot(diff, diff))
            required = 0.25 * step * gnorm * gnorm
            if cand_obj <= obj - required:
                accepted = True
                break
            if required <= plateau:
                # Gradient-contraction endgame. The first step that shows any
                # decrease is usually far too long (it contracts by a sliver
                # and the search stalls), so sweep on through the halvings and
                # keep the best contraction; the quality of candidates is
                # unimodal in the step, so stop once it turns worse.
                cg = p.gradient_fn(cand) + (cand - x) / tau
                cgn = float(np.linalg.norm(cg))
                if fallback is None or cgn < fallback[0]:
                    fallback = (cgn, cand, cand_obj, cg, step)
                elif fallback[0] < gnorm:
                    break
            step *= 0.5
        if accepted:
            y, obj = cand, cand_obj
            grad = p.gradient_fn(y) + (y - x) / tau
            gnorm = float(np.linalg.norm(grad))
        elif fallback is not None and fallback[0] < gnorm:
            gnorm, y, obj, grad, step = fallback
        else:
            break
        if gnorm < best_gnorm:
            best_y, best_gnorm, best_obj = y, gnorm, obj
        if gnorm <= target:
            return ProxResult(
                point=y, error_bound=tau * gnorm, iterations=it, objective=obj
            )

    raise ProxFailure(
        f"prox_gd: no certificate after {req.max_iterations} iterations "
        f"(best gradient norm {best_gnorm:.3e}, needed {target:.3e})",
        ProxResult(
            point=best_y,
            error_bound=tau * best_gnorm,
            iterations=req.max_iterations,
            objective=best_obj,
        ),
    )


def _cg(matvec: Callable[[np.ndarray], np.ndarray], b: np.ndarray, rtol: float,
        max_iter: int) -> tuple[np.ndarray, bool]:
    """Plain conjugate gradient for SPD systems; returns (solution, ok)."""
    x = np.zeros_like(b)
    r = b.copy()
    p_dir = r.copy()
    rs = float(np.dot(r, r))
    b_norm = np.sqrt(rs)
    if b_norm == 0.0:
        return x, True
    tol_sq = (rtol * b_norm) ** 2
    for _ in range(max_iter):
        ap = matvec(p_dir)
        denom = float(np.dot(p_dir, ap))
        if denom <= 0.0 or not np.isfinite(denom):
            return x, False  # breakdown; caller falls back
        alpha = rs / denom
        x += alpha * p_dir
        r -= alpha * ap
        rs_new = float(np.dot(r, r))
        if rs_new <= tol_sq:
            return x, True
        p_dir = r + (rs_new / rs) * p_dir
        rs = rs_new
    return x, True


def prox_newton(req: ProxRequest, p: PotentialProfile) -> ProxResult:
    """Inexact Newton on phi with matrix-free CG inner solves.

    The Newton system (grad^2 V(y) + I/tau) s = -grad phi(y) is solved to a
    forcing tolerance of 0.1 relative; a CG breakdown (non-SPD curvature
    along the path) falls back to a plain gradient step, which still counts
    as an iteration. Same certificate as prox_gd.
    """
    _require_smooth(p)
    if p.hessian_vec_fn is None:
        raise UnsupportedOperation(
            f"potential '{p.name}' has no Hessian-vector product for Newton"
        )
    x, tau, delta = req.x, req.tau, req.delta
    target = delta / tau

    y = x.copy()
    grad = p.gradient_fn(y)
    gnorm = float(np.linalg.norm(grad))
    obj = float(p.value_fn(y))
    if gnorm <= target:
        return ProxResult(point=y, error_bound=tau * gnorm, iterations=0, objective=obj)

    best_y, best_gnorm, best_obj = y, gnorm, obj
    for it in range(1, req.max_iterations + 1):
        def hess_phi(v, y=y):
            return p.hessian_vec_fn(y, v) + v / tau

        s, ok = _cg(hess_phi, -grad, rtol=0.1, max_iter=max(20, min(p.dim, 100)))
        if not ok or float(np.dot(s, grad)) >= 0.0:
            s = -tau * grad  # fallback gradient step, scaled like prox_gd's first try

        # Backtracking line search along s, with the same float-plateau
        # tolerance as prox_gd.
        plateau = 16.0 * np.finfo(np.float64).eps * max(abs(obj), 1.0)
        t = 1.0
        while True:
            cand = y + t * s
            diff = cand - x
            cand_obj = float(p.value_fn(cand) + 0.5 / tau * np.dot(diff, diff))
            if cand_obj <= obj + 1e-4 * t * float(np.dot(grad, s)) + plateau or t < 1e-18:
                break
            t *= 0.5
        y, obj = cand, cand_obj
        grad = p.gradient_fn(y) + (y - x) / tau
        gnorm = float(np.linalg.norm(grad))
        if gnorm < best_gnorm:
            best_y, best_gnorm, best_obj = y, gnorm, obj
        if gnorm <= target:
            return ProxResult(
                point=y, error_bound=tau * gnorm, iterations=it, objective=obj
            )

    raise ProxFailure(
        f"prox_newton: no certificate after {req.max_iterations} iterations "
        f"(best gradient norm {best_gnorm:.3e}, needed {target:.3e})",
        ProxResult(
            point=best_y,
            error_bound=tau * best_gnorm,
            iterations=req.max_iterations,
            objective=best_obj,
        ),
    )


# ---------------------------------------------------------------------------
# primal-dual hybrid gradient for the TV deconvolution potential


def _grad_op(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-padded forward differences (horizontal, vertical), each (n, n)."""
    ph = np.zeros_like(u)
    pv = np.zeros_like(u)
    ph[:, :-1] = u[:, 1:] - u[:, :-1]
    pv[:-1, :] = u[1:, :] - u[:-1, :]
    return ph, pv


def _grad_adjoint(ph: np.ndarray, pv: np.ndarray) -> np.ndarray:
    """Adjoint of _grad_op, so <grad(u), p> = <u, adjoint(p)>."""
    out = np.zeros_like(ph)
    out[:, :-1] -= ph[:, :-1]
    out[:, 1:] += ph[:, :-1]
    out[:-1, :] -= pv[:-1, :]
    out[1:, :] += pv[:-1, :]
    return out


def prox_tv_pdhg(
    req: ProxRequest,
    p: PotentialProfile,
    balance_factor: float = 10.0,
    adapt0: float = 0.5,
    check_every: int = 5,
) -> ProxResult:
    """Adaptive PDHG for min_u |y-Hu|^2/(2 s^2) + beta TV(u) + |u-x|^2/(2 tau).

    The primal update is exact in Fourier space because H is circulant and the
    added quadratics are diagonal. The dual update projects onto the per-pixel
    2-norm ball of radius beta. Step sizes start at 1/sqrt(8) (the TV operator
    norm squared is at most 8) and are rebalanced by (1 + adapt) whenever the
    primal and dual residuals differ by more than ``balance_factor``, with
    ``adapt`` halved on each adjustment; the product of the steps is invariant,
    preserving the convergence condition.

    The stopping certificate combines the smooth-part gradient g (a residual
    of primal optimality at the current dual point) with the nonnegative
    duality gap of the TV term:

        |u - u*| <= tau |g| + sqrt(tau^2 |g|^2 + 2 tau gap),

    which follows from (1/tau)-strong convexity of the primal objective.
    """
    if p.name != "deconvolution":
        raise UnsupportedOperation(
            f"prox_tv_pdhg expects the deconvolution potential, got '{p.name}'"
        )
    prm = p.params
    side = prm["side"]
    otf = prm["otf"]
    sigma = prm["sigma"]
    beta = prm["beta"]
    tau = req.tau
    y_obs = prm["observed"].reshape(side, side)

    x_img = req.x.reshape(side, side)
    inv_s2 = 1.0 / (sigma * sigma) if np.isfinite(sigma) else 0.0

    y_hat = np.fft.fft2(y_obs)
    x_hat = np.fft.fft2(x_img)
    otf_conj = np.conj(otf)
    otf_sq = np.abs(otf) ** 2

    def smooth_grad(u):
        # gradient of |y-Hu|^2/(2 s^2) + |u-x|^2/(2 tau)
        hu = np.real(np.fft.ifft2(np.fft.fft2(u) * otf))
        back = np.real(np.fft.ifft2(np.fft.fft2(hu - y_obs) * otf_conj))
        return inv_s2 * back + (u - x_img) / tau

    def certificate(u, ph, pv):
        g = smooth_grad(u) + _grad_adjoint(ph, pv)
        gn = float(np.linalg.norm(g))
        du_h, du_v = _grad_op(u)
        gap = beta * potentials.tv(u.ravel(), side) - float(
            np.sum(du_h * ph) + np.sum(du_v * pv)
        )
        gap = max(gap, 0.0)
        return tau * gn + np.sqrt((tau * gn) ** 2 + 2.0 * tau * gap)

    t_p = 1.0 / np.sqrt(8.0)  # primal step
    t_d = 1.0 / np.sqrt(8.0)  # dual step
    adapt = adapt0

    u = x_img.copy()
    ph = np.zeros_like(u)
    pv = np.zeros_like(u)
    u_bar = u

    err = certificate(u, ph, pv)
    if err <= req.delta:
        obj = _objective(p, req.x, u.ravel(), tau)
        return ProxResult(point=u.ravel(), error_bound=err, iterations=0, objective=obj)
    best_u, best_err = u, err

    for it in range(1, req.max_iterations + 1):
        u_prev, ph_prev, pv_prev = u, ph, pv

        # dual ascent + projection onto the beta-ball, pixel pairwise
        gh, gv = _grad_op(u_bar)
        qh = ph + t_d * gh
        qv = pv + t_d * gv
        mag = np.sqrt(qh * qh + qv * qv)
        scale = beta / np.maximum(mag, beta) if beta > 0 else 0.0
        ph = qh * scale
        pv = qv * scale

        # exact primal prox in Fourier space
        v = u - t_p * _grad_adjoint(ph, pv)
        v_hat = np.fft.fft2(v)
        denom = inv_s2 * otf_sq + 1.0 / tau + 1.0 / t_p
        num = inv_s2 * otf_conj * y_hat + x_hat / tau + v_hat / t_p
        u = np.real(np.fft.ifft2(num / denom))
        u_bar = 2.0 * u - u_prev

        if it % check_every == 0 or it == req.max_iterations:
            err = certificate(u, ph, pv)
            if err < best_err:
                best_u, best_err = u, err
            if err <= req.delta:
                obj = _objective(p, req.x, u.ravel(), tau)
                return ProxResult(
                    point=u.ravel(), error_bound=err, iterations=it, objective=obj
                )

            # residual balancing
            r_p = float(
                np.linalg.norm((u_prev - u) / t_p - _grad_adjoint(ph_prev - ph, pv_prev - pv))
            )
            dh, dv = _grad_op(u_prev - u)
            r_d = float(
                np.linalg.norm(
                    np.concatenate((((ph_prev - ph) / t_d - dh).ravel(),
                                    ((pv_prev - pv) / t_d - dv).ravel()))
                )
            )
            if r_p > balance_factor * r_d and r_d > 0:
                t_p *= 1.0 + adapt
                t_d /= 1.0 + adapt
                adapt *= 0.5
            elif r_d > balance_factor * r_p and r_p > 0:
                t_d *= 1.0 + adapt
                t_p /= 1.0 + adapt
                adapt *= 0.5

    obj = _objective(p, req.x, best_u.ravel(), tau)
    raise ProxFailure(
        f"prox_tv_pdhg: no certificate after {req.max_iterations} iterations "
        f"(best bound {best_err:.3e}, needed {req.delta:.3e})",
        ProxResult(
            point=best_u.ravel(),
            error_bound=best_err,
            iterations=req.max_iterations,
            objective=obj,
        ),
    )


# ---------------------------------------------------------------------------
# dispatch

_EXACT = {
    "gaussian": prox_exact_gaussian,
    "quartic": prox_exact_quartic,
}

SOLVERS = ("exact", "gd", "newton", "pdhg")


def solve(req: ProxRequest, p: PotentialProfile, method: str) -> ProxResult:
    """Run the chosen solver for this potential."""
    if method == "exact":
        fn = _EXACT.get(p.name)
        if fn is None:
            raise UnsupportedOperation(
                f"no exact proximal map for potential '{p.name}'"
            )
        return fn(req)
    if method == "gd":
        return prox_gd(req, p)
    if method == "newton":
        return prox_newton(req, p)
    if method == "pdhg":
        return prox_tv_pdhg(req, p)
    raise ValueError(f"unknown prox solver '{method}'; choose from {SOLVERS}")
