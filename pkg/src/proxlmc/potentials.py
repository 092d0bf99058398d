"""Potential functions and their convexity/growth metadata.

A potential V defines a target density proportional to exp(-V). Samplers and
the constant calculators need a handful of numbers besides the callables:

* ``lambda_v`` and ``r_v``: strong-convexity modulus that holds outside a
  centered ball of radius ``r_v`` (``r_v = 0`` means globally).
* ``q_v``: tail growth exponent; the gradient grows like ``|x|**q_v``.
* ``c_v``: constant in the one-sided growth bound
  ``V(y) <= V(x) + grad(x).(y-x) + c_v(1+|x|**(q_v-1)+|y|**(q_v-1))|y-x|^2``.
* ``l_q``: constant in the matching local Lipschitz bound for the gradient.
* ``smooth``: whether a gradient is available at all. The TV-regularized
  deconvolution potential is value-only.

Shipped potentials: an isotropic Gaussian (validation baseline), a separable
quartic, a Ginzburg-Landau lattice model on a periodic q x q x q grid, and a
total-variation image deconvolution posterior.

The module-level ``value``/``gradient``/``hessian_vec`` operations enforce the
1-d contract (length ``dim``, finite entries). The underlying callables accept
stacked inputs of shape ``(..., dim)`` so batched chain drivers can reuse them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

__all__ = [
    "PotentialProfile",
    "UnsupportedOperation",
    "value",
    "gradient",
    "hessian_vec",
    "tv",
    "gaussian",
    "quartic",
    "ginzburg_landau",
    "deconvolution",
]


class UnsupportedOperation(TypeError):
    """Raised when an operation is not defined for a potential."""


@dataclass(frozen=True)
class PotentialProfile:
    """A potential with its convexity and growth metadata.

    The callables are stored privately; use the module functions ``value``,
    ``gradient`` and ``hessian_vec``, which validate inputs.
    """

    name: str
    dim: int
    lambda_v: float
    r_v: float
    q_v: float
    c_v: float
    l_q: float
    smooth: bool
    minimizer: np.ndarray
    params: Mapping[str, Any] = field(default_factory=dict)
    value_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=None)
    gradient_fn: Callable[[np.ndarray], np.ndarray] | None = field(repr=False, default=None)
    hessian_vec_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(
        repr=False, default=None
    )

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.q_v < 1.0:
            raise ValueError(f"q_v must be >= 1, got {self.q_v}")
        if self.lambda_v < 0.0:
            raise ValueError(f"lambda_v must be >= 0, got {self.lambda_v}")
        if self.r_v < 0.0:
            raise ValueError(f"r_v must be >= 0, got {self.r_v}")
        if not self.c_v > 0.0:
            raise ValueError(f"c_v must be > 0, got {self.c_v}")
        if not self.l_q > 0.0:
            raise ValueError(f"l_q must be > 0, got {self.l_q}")
        mn = np.asarray(self.minimizer, dtype=np.float64)
        if mn.shape != (self.dim,):
            raise ValueError(
                f"minimizer must have shape ({self.dim},), got {mn.shape}"
            )
        object.__setattr__(self, "minimizer", mn)
        if self.value_fn is None:
            raise ValueError("a potential needs a value callable")


def _check_point(p: PotentialProfile, x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.dim,):
        raise ValueError(
            f"{name} has shape {x.shape}, expected ({p.dim},) for potential "
            f"'{p.name}'"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def value(p: PotentialProfile, x) -> float:
    """Evaluate V(x)."""
    x = _check_point(p, x)
    return float(p.value_fn(x))


def gradient(p: PotentialProfile, x) -> np.ndarray:
    """Evaluate grad V(x). Raises UnsupportedOperation on non-smooth potentials."""
    if not p.smooth or p.gradient_fn is None:
        raise UnsupportedOperation(
            f"potential '{p.name}' is not smooth; gradient is unavailable"
        )
    x = _check_point(p, x)
    return p.gradient_fn(x)


def hessian_vec(p: PotentialProfile, x, v) -> np.ndarray:
    """Evaluate the Hessian-vector product (grad^2 V(x)) v without forming the matrix."""
    if not p.smooth or p.hessian_vec_fn is None:
        raise UnsupportedOperation(
            f"potential '{p.name}' does not provide Hessian-vector products"
        )
    x = _check_point(p, x)
    v = _check_point(p, v, name="v")
    return p.hessian_vec_fn(x, v)


# ---------------------------------------------------------------------------
# total variation


def tv(image, side: int) -> float:
    """2-d discrete isotropic total variation of a flattened side x side image.

    Interior pixels contribute sqrt(dh^2 + dv^2) of their forward differences;
    the last row and last column contribute the absolute one-sided differences
    that still exist there. No wrap-around.
    """
    u = np.asarray(image, dtype=np.float64)
    if u.shape != (side * side,):
        raise ValueError(
            f"image has {u.size} entries, expected side*side = {side * side}"
        )
    z = u.reshape(side, side)
    dh = z[:, 1:] - z[:, :-1]
    dv = z[1:, :] - z[:-1, :]
    if side == 1:
        return 0.0
    interior = np.sqrt(dh[:-1, :] ** 2 + dv[:, :-1] ** 2).sum()
    last_row = np.abs(dh[-1, :]).sum()
    last_col = np.abs(dv[:, -1]).sum()
    return float(interior + last_row + last_col)


# ---------------------------------------------------------------------------
# concrete potentials


def gaussian(dim: int) -> PotentialProfile:
    """V(x) = |x|^2 / 2, the standard Gaussian potential."""

    def val(x):
        return 0.5 * np.sum(x * x, axis=-1)

    def grad(x):
        return x.copy()

    def hvp(x, v):
        return v.copy()

    return PotentialProfile(
        name="gaussian",
        dim=dim,
        lambda_v=1.0,
        r_v=0.0,
        q_v=1.0,
        c_v=0.5,
        l_q=1.0,
        smooth=True,
        minimizer=np.zeros(dim),
        value_fn=val,
        gradient_fn=grad,
        hessian_vec_fn=hvp,
    )


def quartic(dim: int) -> PotentialProfile:
    """V(x) = sum_i x_i^4 / 4, a separable light-tailed potential.

    The per-coordinate curvature 3 x_i^2 vanishes at x_i = 0, so strong
    convexity outside a ball holds only in the aggregate sense; lambda_v = 1
    with r_v = 1 is the conventional pair used by the step-size heuristics.
    c_v = 3 and l_q = 3 are exact for the growth bounds with q_v = 3.
    """

    def val(x):
        return 0.25 * np.sum(x ** 4, axis=-1)

    def grad(x):
        return x ** 3

    def hvp(x, v):
        return 3.0 * x * x * v

    return PotentialProfile(
        name="quartic",
        dim=dim,
        lambda_v=1.0,
        r_v=1.0,
        q_v=3.0,
        c_v=3.0,
        l_q=3.0,
        smooth=True,
        minimizer=np.zeros(dim),
        value_fn=val,
        gradient_fn=grad,
        hessian_vec_fn=hvp,
    )


def _lattice_neighbors(q: int) -> tuple[np.ndarray, ...]:
    """Forward and backward neighbor index arrays for a periodic q^3 lattice."""
    idx = np.arange(q ** 3).reshape(q, q, q)
    fwd = [np.roll(idx, -1, axis=a).ravel() for a in range(3)]
    bwd = [np.roll(idx, 1, axis=a).ravel() for a in range(3)]
    return tuple(fwd), tuple(bwd)


_GL_CONVEXITY_CACHE: dict[tuple, tuple[float, float]] = {}


def _gl_convexity_estimate(
    q: int, varkappa: float, varsigma: float, upsilon: float
) -> tuple[float, float]:
    """Estimate (lambda_v, r_v) for the lattice model by shell sampling.

    There is no closed form: the quadratic part is indefinite whenever
    upsilon > 1. We sample points on spheres of increasing radius, take the
    smallest eigenvalue of the dense Hessian at each, and report the first
    radius past which every sampled eigenvalue clears a small positive floor.
    This captures typical-case curvature, not an adversarial bound, and is
    meant for step-size heuristics only. Returns (0, 0) when no sampled shell
    clears the floor or the lattice is too large to factor densely.
    """
    key = (q, round(varkappa, 12), round(varsigma, 12), round(upsilon, 12))
    if key in _GL_CONVEXITY_CACHE:
        return _GL_CONVEXITY_CACHE[key]

    d = q ** 3
    if d > 1331:  # dense eigensolves get slow past q = 11
        _GL_CONVEXITY_CACHE[key] = (0.0, 0.0)
        return 0.0, 0.0

    fwd, bwd = _lattice_neighbors(q)
    adjacency = np.zeros((d, d))
    rows = np.arange(d)
    for a in range(3):
        adjacency[rows, fwd[a]] += 1.0
        adjacency[rows, bwd[a]] += 1.0
    quad = (1.0 - upsilon) * np.eye(d) + upsilon * varkappa * (
        6.0 * np.eye(d) - adjacency
    )

    rng = np.random.default_rng(0x51E11)
    floor = 0.05
    radii = np.geomspace(0.5, 4.0 * math.sqrt(d), 24)
    shell_min = np.empty(radii.size)
    for i, r in enumerate(radii):
        worst = np.inf
        for _ in range(8):
            u = rng.standard_normal(d)
            u *= r / np.linalg.norm(u)
            h = quad + np.diag(3.0 * upsilon * varsigma * u * u)
            worst = min(worst, float(np.linalg.eigvalsh(h)[0]))
        shell_min[i] = worst

    lam, rad = 0.0, 0.0
    for i in range(radii.size):
        tail = shell_min[i:]
        if np.all(tail >= floor):
            lam, rad = float(tail.min()), float(radii[i])
            break
    _GL_CONVEXITY_CACHE[key] = (lam, rad)
    return lam, rad


def ginzburg_landau(
    q: int,
    varkappa: float = 0.1,
    varsigma: float = 0.5,
    upsilon: float = 2.0,
) -> PotentialProfile:
    """Lattice double-well potential on a periodic q x q x q grid (dim = q^3).

    V(x) = sum_i [ (1-upsilon)/2 x_i^2
                   + (upsilon*varkappa/2) sum_axes (x_{i+e} - x_i)^2
                   + (upsilon*varsigma/4) x_i^4 ]

    with forward differences along the three lattice axes and wrap-around
    indexing. The gradient couples each site to its six neighbors.
    """
    if q < 1:
        raise ValueError(f"lattice side q must be >= 1, got {q}")
    d = q ** 3
    fwd, bwd = _lattice_neighbors(q)
    uk = upsilon * varkappa
    us = upsilon * varsigma

    def val(x):
        out = 0.5 * (1.0 - upsilon) * np.sum(x * x, axis=-1)
        for a in range(3):
            diff = x[..., fwd[a]] - x
            out = out + 0.5 * uk * np.sum(diff * diff, axis=-1)
        return out + 0.25 * us * np.sum(x ** 4, axis=-1)

    def grad(x):
        nb = x[..., fwd[0]] + x[..., bwd[0]]
        for a in (1, 2):
            nb = nb + x[..., fwd[a]] + x[..., bwd[a]]
        return (1.0 - upsilon) * x + uk * (6.0 * x - nb) + us * x ** 3

    def hvp(x, v):
        nb = v[..., fwd[0]] + v[..., bwd[0]]
        for a in (1, 2):
            nb = nb + v[..., fwd[a]] + v[..., bwd[a]]
        return (1.0 - upsilon) * v + uk * (6.0 * v - nb) + 3.0 * us * x * x * v

    # Conservative growth constants from the Hessian bound
    # |H(z)| <= |1-upsilon| + 12*upsilon*varkappa + 3*upsilon*varsigma*|z|^2.
    quad_norm = abs(1.0 - upsilon) + 12.0 * uk
    l_q = max(quad_norm, 6.0 * us, 1e-12)
    c_v = max(0.5 * quad_norm + 3.0 * us, 1e-12)
    lam, rad = _gl_convexity_estimate(q, varkappa, varsigma, upsilon)

    return PotentialProfile(
        name="ginzburg_landau",
        dim=d,
        lambda_v=lam,
        r_v=rad,
        q_v=3.0,
        c_v=c_v,
        l_q=l_q,
        smooth=True,
        minimizer=np.zeros(d),
        params={
            "q": q,
            "varkappa": varkappa,
            "varsigma": varsigma,
            "upsilon": upsilon,
        },
        value_fn=val,
        gradient_fn=grad,
        hessian_vec_fn=hvp,
    )


def deconvolution(
    observed,
    otf: np.ndarray,
    sigma: float,
    beta: float,
    side: int,
) -> PotentialProfile:
    """Posterior potential |y - Hx|^2/(2 sigma^2) + beta * TV(x) for deconvolution.

    ``otf`` is the kernel transfer function (2-d FFT of the origin-embedded
    point-spread function, see the imaging module). The TV term makes the
    potential non-smooth, so only the value is exposed; sampling goes through
    the primal-dual proximal solver. The ``minimizer`` field holds the
    observed image as a convenient reference start, not the actual mode.
    """
    y = np.asarray(observed, dtype=np.float64)
    d = side * side
    if y.shape != (d,):
        raise ValueError(f"observed has shape {y.shape}, expected ({d},)")
    if otf.shape != (side, side):
        raise ValueError(f"otf has shape {otf.shape}, expected ({side}, {side})")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")

    y2d = y.reshape(side, side)
    inv_two_sigma_sq = 0.5 / (sigma * sigma)

    def val(x):
        u = x.reshape(side, side)
        hu = np.real(np.fft.ifft2(np.fft.fft2(u) * otf))
        resid = y2d - hu
        return inv_two_sigma_sq * np.sum(resid * resid) + beta * tv(x, side)

    tiny = np.finfo(np.float64).tiny
    return PotentialProfile(
        name="deconvolution",
        dim=d,
        lambda_v=0.0,
        r_v=0.0,
        q_v=1.0,
        c_v=max(inv_two_sigma_sq + beta, tiny),
        l_q=max(2.0 * inv_two_sigma_sq + beta, tiny),
        smooth=False,
        minimizer=y.copy(),
        params={
            "observed": y,
            "otf": otf,
            "sigma": float(sigma),
            "beta": float(beta),
            "side": int(side),
        },
        value_fn=val,
        gradient_fn=None,
        hessian_vec_fn=None,
    )
