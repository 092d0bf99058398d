"""Markov chain kernels and chain drivers.

Four one-step kernels share the same shape: take a :class:`ChainState`,
return a new one. A state that has already diverged passes through untouched
(no random draws), so traces freeze at the last finite point.

Kernels
-------
``ipla_step``   proximal step (inexact, certified) followed by Gaussian noise
                of variance 2 tau per coordinate.
``ula_step``    explicit Euler on the gradient flow plus the same noise.
``tula_step``   ULA with a tamed drift, stable for superlinear gradients.
``mh_step``     random-walk Metropolis-Hastings; needs only potential values.

Drivers
-------
``run_chain``     one chain, one kernel, records a :class:`ChainTrace`.
``run_replicas``  independent replicas with per-replica RNG streams; batches
                  the arithmetic across replicas when the kernel allows it,
                  and can spread replicas over processes.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import potentials as _pot
from . import prox as _prox
from .potentials import PotentialProfile, UnsupportedOperation
from .prox import ProxFailure, ProxRequest

__all__ = [
    "ChainState",
    "ChainTrace",
    "StepSizeWarning",
    "DIVERGENCE_NORM",
    "init_state",
    "replica_rng",
    "ipla_step",
    "ula_step",
    "tula_step",
    "mh_step",
    "run_chain",
    "run_replicas",
]

# A chain whose norm passes this is dead for sampling purposes even if the
# floats are still finite; freezing it early keeps traces readable.
DIVERGENCE_NORM = 1e154


class StepSizeWarning(UserWarning):
    """The step size is outside the regime the convergence bounds cover."""


# ---------------------------------------------------------------------------
# RNG streams


def _splitmix64(z: int) -> int:
    mask = (1 << 64) - 1
    z = (z + 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


def replica_rng(base_seed: int, replica: int) -> np.random.Generator:
    """Independent generator for one replica, reproducible from (seed, id)."""
    mixed = _splitmix64(((base_seed & ((1 << 64) - 1)) << 1) ^ _splitmix64(replica))
    return np.random.default_rng(mixed)


# ---------------------------------------------------------------------------
# state


@dataclass(frozen=True)
class ChainState:
    """One point of a chain, plus everything needed to take the next step."""

    x: np.ndarray
    step: int
    rng: np.random.Generator
    diverged_at: int | None = None
    prox_iters: int = 0          # inner iterations spent by the last step
    prox_certified: bool = True  # False when the last prox exceeded its budget
    v_cache: float | None = field(default=None, repr=False)


def init_state(x0: np.ndarray, base_seed: int = 0, replica: int = 0) -> ChainState:
    x0 = np.asarray(x0, dtype=np.float64).copy()
    if x0.ndim != 1:
        raise ValueError(f"x0 must be one-dimensional, got shape {x0.shape}")
    return ChainState(x=x0, step=0, rng=replica_rng(base_seed, replica))


def _advance(
    s: ChainState,
    x_new: np.ndarray,
    prox_iters: int = 0,
    prox_certified: bool = True,
    v_cache: float | None = None,
) -> ChainState:
    """Divergence-checked transition to x_new."""
    with np.errstate(over="ignore", invalid="ignore"):
        finite = bool(np.all(np.isfinite(x_new)))
        norm_ok = finite and float(np.linalg.norm(x_new)) <= DIVERGENCE_NORM
    if not norm_ok:
        return replace(
            s,
            step=s.step + 1,
            diverged_at=s.step + 1,
            prox_iters=prox_iters,
            prox_certified=prox_certified,
            v_cache=None,
        )
    return ChainState(
        x=x_new,
        step=s.step + 1,
        rng=s.rng,
        prox_iters=prox_iters,
        prox_certified=prox_certified,
        v_cache=v_cache,
    )


# ---------------------------------------------------------------------------
# kernels


def ipla_step(
    s: ChainState,
    p: PotentialProfile,
    tau: float,
    *,
    kappa: float = 1.0,
    alpha: float = 1.0,
    solver: str = "gd",
    delta_abs: float | None = None,
    prox_max_iterations: int = 500,
    on_prox_failure: str = "diverge",
) -> ChainState:
    """Inexact proximal step, then noise of variance 2 tau per coordinate.

    The proximal accuracy target is delta = kappa * tau**(1 + alpha) unless
    ``delta_abs`` overrides it. A prox that misses its budget either freezes
    the chain (``on_prox_failure="diverge"``) or keeps the best iterate and
    marks the step uncertified (``"accept"``), which imaging runs prefer.
    """
    if s.diverged_at is not None:
        return s
    if p.lambda_v > 0 and tau >= 1.0 / p.lambda_v:
        warnings.warn(
            f"step size tau={tau} is at or above 1/lambda_v={1.0 / p.lambda_v}; "
            "the ergodicity bounds do not cover this regime",
            StepSizeWarning,
            stacklevel=2,
        )
    delta = delta_abs if delta_abs is not None else kappa * tau ** (1.0 + alpha)
    req = ProxRequest(x=s.x, tau=tau, delta=delta, max_iterations=prox_max_iterations)
    certified = True
    try:
        res = _prox.solve(req, p, solver)
    except ProxFailure as fail:
        if on_prox_failure == "accept":
            res = fail.best
            certified = False
        elif on_prox_failure == "diverge":
            return replace(
                s,
                step=s.step + 1,
                diverged_at=s.step + 1,
                prox_iters=fail.best.iterations,
                prox_certified=False,
                v_cache=None,
            )
        else:
            raise ValueError(
                f"on_prox_failure must be 'diverge' or 'accept', got {on_prox_failure!r}"
            ) from fail
    noise = s.rng.standard_normal(p.dim)
    x_new = res.point + np.sqrt(2.0 * tau) * noise
    return _advance(s, x_new, prox_iters=res.iterations, prox_certified=certified)


def ula_step(s: ChainState, p: PotentialProfile, tau: float) -> ChainState:
    """Unadjusted Langevin: x - tau grad V(x) + sqrt(2 tau) Z."""
    if s.diverged_at is not None:
        return s
    if not p.smooth:
        raise UnsupportedOperation(f"ula_step needs a gradient; '{p.name}' has none")
    noise = s.rng.standard_normal(p.dim)
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = s.x - tau * p.gradient_fn(s.x) + np.sqrt(2.0 * tau) * noise
    return _advance(s, x_new)


def tula_step(
    s: ChainState, p: PotentialProfile, tau: float, taming: str = "tau"
) -> ChainState:
    """Tamed ULA: the drift is divided by 1 + tau|grad| (or 1 + |grad|).

    Taming keeps the chain stable for superlinearly growing gradients where
    plain ULA blows up at any fixed step size.
    """
    if s.diverged_at is not None:
        return s
    if not p.smooth:
        raise UnsupportedOperation(f"tula_step needs a gradient; '{p.name}' has none")
    grad = p.gradient_fn(s.x)
    gnorm = float(np.linalg.norm(grad))
    if taming == "tau":
        denom = 1.0 + tau * gnorm
    elif taming == "plain":
        denom = 1.0 + gnorm
    else:
        raise ValueError(f"taming must be 'tau' or 'plain', got {taming!r}")
    noise = s.rng.standard_normal(p.dim)
    x_new = s.x - tau * grad / denom + np.sqrt(2.0 * tau) * noise
    return _advance(s, x_new)


def mh_step(
    s: ChainState, p: PotentialProfile, proposal_std: float | None = None
) -> ChainState:
    """Random-walk Metropolis-Hastings targeting exp(-V).

    Draws the proposal noise and exactly one uniform every step, accepted or
    not, so two runs from the same seed stay aligned step for step. The
    potential value at the current point is carried in the state, halving the
    evaluation count on long chains.
    """
    if s.diverged_at is not None:
        return s
    if proposal_std is None:
        proposal_std = 0.5 / np.sqrt(p.dim)
    v_x = s.v_cache if s.v_cache is not None else float(p.value_fn(s.x))
    prop = s.x + proposal_std * s.rng.standard_normal(p.dim)
    v_prop = float(p.value_fn(prop))
    u = s.rng.random()
    with np.errstate(divide="ignore"):
        accept = np.log(u) < v_x - v_prop
    if accept:
        return _advance(s, prop, v_cache=v_prop)
    return _advance(s, s.x, v_cache=v_x)


# ---------------------------------------------------------------------------
# traces


class ChainTrace:
    """Per-step record of one chain plus running moment sums.

    The per-step series (step index, first coordinate, squared norm, inner
    prox iterations) stops at the divergence step if the chain diverges.
    Moment sums accumulate |x_k|^m for m in {2, 4, 6} over steps k strictly
    after ``burn_in``; ``samples`` optionally keeps every ``thinning``-th
    post-burn-in state.
    """

    def __init__(
        self,
        burn_in: int = 0,
        thinning: int = 1,
        record_series: bool = True,
        store_samples: bool = False,
    ):
        if burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {burn_in}")
        if thinning < 1:
            raise ValueError(f"thinning must be >= 1, got {thinning}")
        self.burn_in = burn_in
        self.thinning = thinning
        self.steps: list[int] | None = [] if record_series else None
        self.x1: list[float] | None = [] if record_series else None
        self.norm_sq: list[float] | None = [] if record_series else None
        self.prox_iters: list[int] | None = [] if record_series else None
        self.samples: list[np.ndarray] | None = [] if store_samples else None
        self.sum_m2 = 0.0
        self.sum_m4 = 0.0
        self.sum_m6 = 0.0
        self.n_post = 0
        self.prox_failures = 0
        self.diverged_at: int | None = None
        self.final_x: np.ndarray | None = None
        self.n_steps_done = 0

    def record(self, s: ChainState):
        if self.steps is not None:
            self.steps.append(s.step)
            self.x1.append(float(s.x[0]))
            self.norm_sq.append(float(s.x @ s.x))
            self.prox_iters.append(s.prox_iters)
        if not s.prox_certified:
            self.prox_failures += 1
        if s.diverged_at is not None:
            self.diverged_at = s.diverged_at
            return
        k = s.step
        if k > self.burn_in:
            n2 = float(s.x @ s.x)
            self.sum_m2 += n2
            self.sum_m4 += n2 * n2
            self.sum_m6 += n2 * n2 * n2
            self.n_post += 1
            if self.samples is not None and (k - self.burn_in - 1) % self.thinning == 0:
                self.samples.append(s.x.copy())

    def moment_sum(self, m: int) -> float:
        try:
            return {2: self.sum_m2, 4: self.sum_m4, 6: self.sum_m6}[m]
        except KeyError:
            raise ValueError(f"running sums cover m in (2, 4, 6), not m={m}") from None


# ---------------------------------------------------------------------------
# drivers


def run_chain(
    step_fn: Callable[[ChainState], ChainState],
    state: ChainState,
    n_steps: int,
    *,
    burn_in: int = 0,
    thinning: int = 1,
    record_series: bool = True,
    store_samples: bool = False,
) -> tuple[ChainState, ChainTrace]:
    """Drive one chain for n_steps (fewer if it diverges)."""
    trace = ChainTrace(burn_in, thinning, record_series, store_samples)
    trace.record(state)
    for _ in range(n_steps):
        state = step_fn(state)
        trace.record(state)
        if state.diverged_at is not None:
            break
    trace.final_x = state.x
    trace.n_steps_done = state.step
    return state, trace


def _make_step_fn(
    method: str,
    p: PotentialProfile,
    tau: float | None,
    kappa: float,
    alpha: float,
    solver: str,
    delta_abs: float | None,
    prox_max_iterations: int,
    on_prox_failure: str,
    taming: str,
    proposal_std: float | None,
) -> Callable[[ChainState], ChainState]:
    if method in ("ipla", "ula", "tula") and tau is None:
        raise ValueError(f"method '{method}' needs a step size tau")
    if method == "ipla":
        return lambda s: ipla_step(
            s,
            p,
            tau,
            kappa=kappa,
            alpha=alpha,
            solver=solver,
            delta_abs=delta_abs,
            prox_max_iterations=prox_max_iterations,
            on_prox_failure=on_prox_failure,
        )
    if method == "ula":
        return lambda s: ula_step(s, p, tau)
    if method == "tula":
        return lambda s: tula_step(s, p, tau, taming=taming)
    if method == "mh":
        return lambda s: mh_step(s, p, proposal_std=proposal_std)
    raise ValueError(f"unknown method '{method}'; choose ipla, ula, tula or mh")


def _record_flags(trajectories: str, n_replicas: int) -> list[bool]:
    if trajectories == "all":
        return [True] * n_replicas
    if trajectories == "first":
        return [r == 0 for r in range(n_replicas)]
    if trajectories == "none":
        return [False] * n_replicas
    raise ValueError(
        f"trajectories must be 'first', 'all' or 'none', got {trajectories!r}"
    )


def _replica_worker(args) -> ChainTrace:
    (name, dim, params, method, x0, n_steps, tau, base_seed, replica, burn_in,
     thinning, kappa, alpha, solver, delta_abs, prox_max_iterations,
     on_prox_failure, taming, proposal_std, record_series, store_samples) = args
    p = _rebuild_profile(name, dim, params)
    step_fn = _make_step_fn(
        method, p, tau, kappa, alpha, solver, delta_abs,
        prox_max_iterations, on_prox_failure, taming, proposal_std,
    )
    state = init_state(x0, base_seed, replica)
    _, trace = run_chain(
        step_fn, state, n_steps,
        burn_in=burn_in, thinning=thinning,
        record_series=record_series, store_samples=store_samples,
    )
    return trace


def _rebuild_profile(name: str, dim: int, params) -> PotentialProfile:
    if name == "gaussian":
        return _pot.gaussian(dim)
    if name == "quartic":
        return _pot.quartic(dim)
    if name == "ginzburg_landau":
        return _pot.ginzburg_landau(
            params["q"], varkappa=params["varkappa"],
            varsigma=params["varsigma"], upsilon=params["upsilon"],
        )
    if name == "deconvolution":
        return _pot.deconvolution(
            params["observed"], params["otf"], params["sigma"],
            params["beta"], params["side"],
        )
    raise ValueError(f"cannot rebuild potential '{name}' in a worker process")


def run_replicas(
    method: str,
    p: PotentialProfile,
    x0: np.ndarray,
    n_steps: int,
    *,
    tau: float | None = None,
    base_seed: int = 0,
    n_replicas: int = 1,
    burn_in: int = 0,
    thinning: int = 1,
    kappa: float = 1.0,
    alpha: float = 1.0,
    solver: str = "gd",
    delta_abs: float | None = None,
    prox_max_iterations: int = 500,
    on_prox_failure: str = "diverge",
    taming: str = "tau",
    proposal_std: float | None = None,
    workers: int = 1,
    trajectories: str = "first",
    store_samples: bool = False,
    force_serial: bool = False,
) -> list[ChainTrace]:
    """Run independent replicas of one chain configuration.

    Replica r draws from its own generator seeded by (base_seed, r), so the
    result does not depend on scheduling. With one worker and a kernel whose
    arithmetic vectorizes cleanly (ULA/TULA on the built-in smooth potentials,
    or the proximal kernel with an exact prox), the replicas advance in lock
    step through batched array math; the draws per replica are identical to
    the serial path, the floating-point results match to roundoff. Set
    ``force_serial=True`` to insist on the one-chain-at-a-time code path.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    record = _record_flags(trajectories, n_replicas)

    batchable = (
        not force_serial
        and workers == 1
        and n_replicas >= 2
        and not store_samples
        and (
            (method == "ipla" and solver == "exact" and p.name in ("gaussian", "quartic"))
            or (method in ("ula", "tula") and p.name in ("gaussian", "quartic", "ginzburg_landau"))
        )
    )
    if batchable:
        return _run_replicas_batched(
            method, p, x0, n_steps, tau, base_seed, n_replicas,
            burn_in, thinning, kappa, alpha, taming, record,
        )

    if workers > 1:
        jobs = [
            (p.name, p.dim, dict(p.params), method, x0, n_steps, tau, base_seed, r,
             burn_in, thinning, kappa, alpha, solver, delta_abs,
             prox_max_iterations, on_prox_failure, taming, proposal_std,
             record[r], store_samples)
            for r in range(n_replicas)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_replica_worker, jobs))

    step_fn = _make_step_fn(
        method, p, tau, kappa, alpha, solver, delta_abs,
        prox_max_iterations, on_prox_failure, taming, proposal_std,
    )
    traces = []
    for r in range(n_replicas):
        state = init_state(x0, base_seed, r)
        _, trace = run_chain(
            step_fn, state, n_steps,
            burn_in=burn_in, thinning=thinning,
            record_series=record[r], store_samples=store_samples,
        )
        traces.append(trace)
    return traces


def _run_replicas_batched(
    method: str,
    p: PotentialProfile,
    x0: np.ndarray,
    n_steps: int,
    tau: float,
    base_seed: int,
    n_replicas: int,
    burn_in: int,
    thinning: int,
    kappa: float,
    alpha: float,
    taming: str,
    record: Sequence[bool],
) -> list[ChainTrace]:
    """Lock-step replica driver; same draws as the serial path, batched math."""
    if tau is None:
        raise ValueError(f"method '{method}' needs a step size tau")
    if method == "ipla" and p.lambda_v > 0 and tau >= 1.0 / p.lambda_v:
        warnings.warn(
            f"step size tau={tau} is at or above 1/lambda_v={1.0 / p.lambda_v}; "
            "the ergodicity bounds do not cover this regime",
            StepSizeWarning,
            stacklevel=3,
        )
    R, d = n_replicas, p.dim
    X = np.tile(x0, (R, 1))
    rngs = [replica_rng(base_seed, r) for r in range(R)]
    alive = np.ones(R, dtype=bool)
    diverged_at = np.full(R, 0, dtype=np.int64)
    sum_m2 = np.zeros(R)
    sum_m4 = np.zeros(R)
    sum_m6 = np.zeros(R)
    n_post = np.zeros(R, dtype=np.int64)
    traces = [ChainTrace(burn_in, thinning, record_series=record[r]) for r in range(R)]
    prox_sweeps = np.zeros(R, dtype=np.int64)
    for r in range(R):
        if record[r]:
            traces[r].steps.append(0)
            traces[r].x1.append(float(X[r, 0]))
            traces[r].norm_sq.append(float(X[r] @ X[r]))
            traces[r].prox_iters.append(0)

    sq2t = np.sqrt(2.0 * tau)
    for k in range(1, n_steps + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        Xa = X[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            if method == "ipla":
                if p.name == "gaussian":
                    drift = Xa / (1.0 + tau)
                    sweeps = 0
                else:
                    drift, sweeps = _prox._quartic_prox_roots(Xa, tau)
                prox_sweeps[idx] = sweeps
            elif method == "ula":
                drift = Xa - tau * p.gradient_fn(Xa)
            else:  # tula
                grad = p.gradient_fn(Xa)
                gnorm = np.linalg.norm(grad, axis=-1, keepdims=True)
                denom = 1.0 + (tau * gnorm if taming == "tau" else gnorm)
                drift = Xa - tau * grad / denom
            noise = np.empty_like(Xa)
            for pos, r in enumerate(idx):
                noise[pos] = rngs[r].standard_normal(d)
            Xn = drift + sq2t * noise
            ok = np.isfinite(Xn).all(axis=1)
            norms = np.linalg.norm(np.where(ok[:, None], Xn, 0.0), axis=1)
            ok &= norms <= DIVERGENCE_NORM

        X[idx[ok]] = Xn[ok]
        dead = idx[~ok]
        if dead.size:
            alive[dead] = False
            diverged_at[dead] = k
        live = idx[ok]
        if k > burn_in and live.size:
            # a chain one step from divergence can push n2^3 past the float
            # range; the serial path propagates the same inf silently
            with np.errstate(over="ignore"):
                n2 = np.einsum("ij,ij->i", X[live], X[live])
                sum_m2[live] += n2
                sum_m4[live] += n2 * n2
                sum_m6[live] += n2 * n2 * n2
            n_post[live] += 1
        for r in idx:
            if record[r]:
                t = traces[r]
                t.steps.append(k)
                t.x1.append(float(X[r, 0]))
                t.norm_sq.append(float(X[r] @ X[r]))
                t.prox_iters.append(int(prox_sweeps[r]) if method == "ipla" else 0)

    for r in range(R):
        t = traces[r]
        t.sum_m2 = float(sum_m2[r])
        t.sum_m4 = float(sum_m4[r])
        t.sum_m6 = float(sum_m6[r])
        t.n_post = int(n_post[r])
        t.diverged_at = int(diverged_at[r]) if not alive[r] else None
        t.final_x = X[r].copy()
        t.n_steps_done = int(diverged_at[r]) if not alive[r] else n_steps
    return traces
