"""Image deconvolution test problems and the sampling loop around them.

The forward model is a circulant (periodic) blur H plus white Gaussian
noise; the prior is total variation. Everything works on flattened images;
``side`` carries the geometry. Intensities follow the 8-bit grayscale
convention: nominal range [0, 255], held as float64 and never clamped
in memory.

File formats
------------
``write_pgm``/``read_pgm`` use binary PGM (P5, maxval 255); export clamps
to [0, 255] and rounds, import returns float64. ``write_raw``/``read_raw``
keep full precision: an 8-byte magic ``LMCIMGf8``, two little-endian uint32
dimensions (width, height), then the row-major float64 little-endian pixels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import potentials as _pot
from .potentials import PotentialProfile
from .samplers import ChainTrace, init_state, ipla_step

__all__ = [
    "disk_psf",
    "make_otf",
    "circulant_blur",
    "phantom",
    "ImageProblem",
    "make_problem",
    "DeconvolveResult",
    "deconvolve_sample",
    "write_pgm",
    "read_pgm",
    "write_raw",
    "read_raw",
]

RAW_MAGIC = b"LMCIMGf8"


def disk_psf(depth: int) -> np.ndarray:
    """Flat disk kernel of the given odd diameter, normalized to sum 1.

    A pixel belongs to the disk when its center lies within depth/2 of the
    kernel center; ``depth=1`` is the identity kernel.
    """
    if depth < 1 or depth % 2 == 0:
        raise ValueError(f"depth must be a positive odd integer, got {depth}")
    half = depth // 2
    di, dj = np.mgrid[-half: half + 1, -half: half + 1]
    mask = di * di + dj * dj <= (depth / 2.0) ** 2
    psf = mask.astype(np.float64)
    return psf / psf.sum()


def make_otf(psf: np.ndarray, side: int) -> np.ndarray:
    """Optical transfer function of a centered kernel on a side x side grid."""
    k = psf.shape[0]
    if psf.shape != (k, k):
        raise ValueError(f"psf must be square, got shape {psf.shape}")
    if k >= side:
        raise ValueError(f"psf of size {k} does not fit a {side}x{side} image")
    emb = np.zeros((side, side))
    emb[:k, :k] = psf
    emb = np.roll(emb, (-(k // 2), -(k // 2)), axis=(0, 1))
    return np.fft.fft2(emb)


def circulant_blur(image: np.ndarray, otf: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """Apply the periodic blur (or its adjoint) to a flattened image."""
    side = otf.shape[0]
    z = np.asarray(image, dtype=np.float64).reshape(side, side)
    kernel = np.conj(otf) if adjoint else otf
    return np.real(np.fft.ifft2(np.fft.fft2(z) * kernel)).ravel()


def phantom(side: int) -> np.ndarray:
    """Deterministic piecewise-constant test image in [0, 255], flattened."""
    if side < 8:
        raise ValueError(f"side must be at least 8, got {side}")
    img = np.full((side, side), 40.0)
    yy, xx = np.mgrid[0:side, 0:side]
    c = side / 2.0
    r = 0.32 * side
    img[(yy - 1.1 * c) ** 2 + (xx - c) ** 2 <= r * r] = 216.0
    img[side // 8: side // 4, side // 8: side // 2] = 140.0
    lo, hi = int(c), int(c) + max(2, side // 10)
    img[lo:hi, lo:hi] = 90.0
    return img.ravel()


@dataclass(frozen=True)
class ImageProblem:
    """One synthetic deconvolution instance."""

    truth: np.ndarray
    observed: np.ndarray
    otf: np.ndarray
    sigma: float
    beta: float
    side: int
    psf_depth: int
    profile: PotentialProfile | None  # None for a noiseless (sigma = 0) instance


def make_problem(
    side: int,
    psf_depth: int,
    sigma: float,
    beta: float,
    *,
    seed: int = 0,
    truth: np.ndarray | None = None,
) -> ImageProblem:
    """Blur the phantom (or a supplied truth), add noise, wrap the potential."""
    if truth is None:
        truth = phantom(side)
    else:
        truth = np.asarray(truth, dtype=np.float64).ravel()
        if truth.size != side * side:
            raise ValueError(
                f"truth has {truth.size} pixels, expected {side * side}"
            )
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    otf = make_otf(disk_psf(psf_depth), side)
    rng = np.random.default_rng(seed)
    observed = circulant_blur(truth, otf) + sigma * rng.standard_normal(side * side)
    # sigma = 0 gives an exact observation with no posterior behind it; such
    # instances are synthesis-only and carry no profile
    profile = (
        _pot.deconvolution(observed, otf, sigma, beta, side) if sigma > 0 else None
    )
    return ImageProblem(
        truth=truth,
        observed=observed,
        otf=otf,
        sigma=sigma,
        beta=beta,
        side=side,
        psf_depth=psf_depth,
        profile=profile,
    )


@dataclass(frozen=True)
class DeconvolveResult:
    """Posterior summaries of one sampling run."""

    mean: np.ndarray
    trace: ChainTrace


def deconvolve_sample(
    problem: ImageProblem,
    *,
    n_steps: int,
    burn_in: int,
    tau: float,
    delta_abs: float | None = None,
    kappa: float = 1.0,
    alpha: float = 1.0,
    base_seed: int = 0,
    replica: int = 0,
    thinning: int = 10,
    start: str = "minimizer",
    prox_max_iterations: int = 500,
    max_failure_rate: float = 0.02,
    failure_warmup: int = 50,
) -> DeconvolveResult:
    """Sample the TV-deconvolution posterior with the proximal kernel.

    The inner solver is the primal-dual one; a step whose prox misses its
    accuracy budget is kept (best iterate) but counted, and the run aborts
    if the failure rate exceeds ``max_failure_rate`` once ``failure_warmup``
    steps have passed. The posterior mean uses every post-burn-in state;
    the trace keeps every ``thinning``-th for quantile maps.
    """
    if problem.profile is None:
        raise ValueError("a sigma = 0 problem has no posterior; rebuild with sigma > 0")
    if burn_in >= n_steps:
        raise ValueError(f"burn_in={burn_in} leaves no samples of n_steps={n_steps}")
    if start == "minimizer":
        x0 = problem.profile.minimizer.copy()
    elif start == "tail":
        x0 = np.zeros(problem.side * problem.side)
    else:
        raise ValueError(f"start must be 'minimizer' or 'tail', got {start!r}")

    state = init_state(x0, base_seed, replica)
    trace = ChainTrace(burn_in, thinning, record_series=True, store_samples=True)
    trace.record(state)
    mean_sum = np.zeros_like(x0)
    n_post = 0
    for _ in range(n_steps):
        state = ipla_step(
            state,
            problem.profile,
            tau,
            kappa=kappa,
            alpha=alpha,
            solver="pdhg",
            delta_abs=delta_abs,
            prox_max_iterations=prox_max_iterations,
            on_prox_failure="accept",
        )
        trace.record(state)
        if state.diverged_at is not None:
            break
        if (
            state.step > failure_warmup
            and trace.prox_failures / state.step > max_failure_rate
        ):
            raise RuntimeError(
                f"aborting: {trace.prox_failures} of {state.step} proximal solves "
                f"missed their accuracy budget (rate above {max_failure_rate}); "
                "raise prox_max_iterations or loosen delta"
            )
        if state.step > burn_in:
            mean_sum += state.x
            n_post += 1
    trace.final_x = state.x
    trace.n_steps_done = state.step
    if n_post == 0:
        raise RuntimeError(
            f"chain diverged at step {state.diverged_at}, before the averaging window"
        )
    return DeconvolveResult(mean=mean_sum / n_post, trace=trace)


# ---------------------------------------------------------------------------
# file formats


def write_pgm(path: str | Path, image: np.ndarray, side: int):
    """Export a flattened image as binary PGM, clamping to [0, 255]."""
    z = np.asarray(image, dtype=np.float64).reshape(side, side)
    z = np.clip(z, 0.0, 255.0)
    data = np.round(z).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{side} {side}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a binary PGM written by :func:`write_pgm`; returns (flat, side)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError(f"not a binary PGM file: magic {magic!r}")
        line = fh.readline()
        while line.startswith(b"#"):
            line = fh.readline()
        width, height = (int(t) for t in line.split())
        maxval = int(fh.readline())
        if maxval != 255:
            raise ValueError(f"expected maxval 255, got {maxval}")
        data = np.frombuffer(fh.read(width * height), dtype=np.uint8)
    if data.size != width * height or width != height:
        raise ValueError(f"truncated or non-square PGM ({width}x{height})")
    return data.astype(np.float64), width


def write_raw(path: str | Path, image: np.ndarray, side: int):
    """Export a flattened image at full precision (see module docstring)."""
    z = np.asarray(image, dtype=np.float64).reshape(side, side)
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC)
        fh.write(struct.pack("<II", side, side))
        fh.write(z.astype("<f8").tobytes())


def read_raw(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a full-precision image written by :func:`write_raw`."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != RAW_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {RAW_MAGIC!r}")
        width, height = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(width * height * 8), dtype="<f8")
    if data.size != width * height or width != height:
        raise ValueError(f"truncated or non-square raw image ({width}x{height})")
    return data.astype(np.float64), width
