"""Readers for the benchmark runner's on-disk formats.

Everything here parses files the sampling harness writes: per-chain CSVs
(step, x1, norm_sq, prox_iters, diverged), experiment summary CSVs
(method, scenario, moment_order, estimate, re, cv), the config.toml echo
sitting next to them, and PGM images. Malformed input raises
:class:`SchemaError` naming the file and the offending column or field.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, NamedTuple

import csv
import numpy as np

from .spec import SchemaError

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

__all__ = [
    "Trajectory",
    "SummaryRow",
    "read_trajectory",
    "read_summary",
    "read_sidecar_config",
    "read_pgm",
]


class Trajectory(NamedTuple):
    steps: np.ndarray        # recorded step indices, increasing
    x1: np.ndarray           # first coordinate at each recorded step
    diverged_at: int | None  # step of the first flagged row, if any


class SummaryRow(NamedTuple):
    method: str
    scenario: str
    moment_order: int
    estimate: float
    re: float
    cv: float


def _read_rows(path: Path, required: tuple[str, ...]) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read ({exc})") from exc
    if header is None:
        raise SchemaError(f"{path}: empty file, expected a header row")
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _cell(path: Path, row_no: int, column: str, raw, cast):
    if raw is None or raw == "":
        raise SchemaError(f"{path}: row {row_no} has no value in column {column!r}")
    try:
        return cast(raw)
    except ValueError as exc:
        raise SchemaError(
            f"{path}: row {row_no}, column {column!r}: cannot parse {raw!r}"
        ) from exc


def read_trajectory(path: str | Path) -> Trajectory:
    """Parse a per-chain CSV. The full series is returned; rendering
    decides what to do about divergence."""
    path = Path(path)
    rows = _read_rows(path, ("step", "x1", "diverged"))
    steps: list[int] = []
    x1: list[float] = []
    diverged_at = None
    for i, row in enumerate(rows, start=2):
        steps.append(_cell(path, i, "step", row.get("step"), int))
        x1.append(_cell(path, i, "x1", row.get("x1"), float))
        flag = _cell(path, i, "diverged", row.get("diverged"), int)
        if flag and diverged_at is None:
            diverged_at = steps[-1]
    return Trajectory(np.asarray(steps), np.asarray(x1, dtype=float), diverged_at)


def read_summary(path: str | Path) -> list[SummaryRow]:
    """Parse an experiment summary CSV into typed rows."""
    path = Path(path)
    rows = _read_rows(
        path, ("method", "scenario", "moment_order", "estimate", "re", "cv")
    )
    out = []
    for i, row in enumerate(rows, start=2):
        out.append(
            SummaryRow(
                method=_cell(path, i, "method", row.get("method"), str),
                scenario=_cell(path, i, "scenario", row.get("scenario"), str),
                moment_order=_cell(
                    path, i, "moment_order", row.get("moment_order"), int
                ),
                estimate=_cell(path, i, "estimate", row.get("estimate"), float),
                re=_cell(path, i, "re", row.get("re"), float),
                cv=_cell(path, i, "cv", row.get("cv"), float),
            )
        )
    return out


def read_sidecar_config(
    data_path: str | Path, required: bool = True
) -> dict[str, Any]:
    """Load the config.toml echo next to a result file.

    Returns the document flattened to dotted keys (``prox.solver`` style).
    A missing file raises when required, otherwise yields an empty dict so
    hand-made CSVs without an echo still render.
    """
    data_path = Path(data_path)
    path = data_path.parent / "config.toml"
    if not path.is_file():
        if not required:
            return {}
        raise SchemaError(
            f"{path} not found; this figure needs the config.toml echo the "
            f"runner writes next to {data_path.name}"
        )
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"{path}: not valid TOML ({exc})") from exc
    flat: dict[str, Any] = {}

    def walk(table: dict[str, Any], prefix: str):
        for key, val in table.items():
            if isinstance(val, dict):
                walk(val, f"{prefix}{key}.")
            else:
                flat[f"{prefix}{key}"] = val

    walk(doc, "")
    return flat


def _pgm_tokens(blob: bytes, count: int) -> tuple[list[bytes], int]:
    """First header tokens of a netpbm file, skipping '#' comments.
    Returns the tokens and the offset just past the last one."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count and pos < len(blob):
        char = blob[pos : pos + 1]
        if char.isspace():
            pos += 1
        elif char == b"#":
            newline = blob.find(b"\n", pos)
            pos = len(blob) if newline < 0 else newline + 1
        else:
            end = pos
            while (
                end < len(blob)
                and not blob[end : end + 1].isspace()
                and blob[end : end + 1] != b"#"
            ):
                end += 1
            tokens.append(blob[pos:end])
            pos = end
    return tokens, pos


def read_pgm(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a P2 or P5 PGM image.

    Returns (array of shape (height, width) as float, maxval). 16-bit
    binary rasters are big-endian per the format.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read ({exc})") from exc
    tokens, pos = _pgm_tokens(blob, 4)
    if len(tokens) < 4:
        raise SchemaError(f"{path}: truncated PGM header")
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise SchemaError(f"{path}: not a PGM file (magic {magic!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric PGM header field") from exc
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise SchemaError(
            f"{path}: bad PGM geometry ({width}x{height}, maxval {maxval})"
        )
    n_pixels = width * height
    if magic == b"P5":
        raster = blob[pos + 1 :]  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        need = n_pixels * dtype.itemsize
        if len(raster) < need:
            raise SchemaError(
                f"{path}: raster holds {len(raster)} bytes, expected {need}"
            )
        img = np.frombuffer(raster[:need], dtype=dtype).astype(float)
    else:
        samples = blob[pos:].split()
        if len(samples) < n_pixels:
            raise SchemaError(
                f"{path}: raster holds {len(samples)} samples, expected {n_pixels}"
            )
        try:
            img = np.array([int(s) for s in samples[:n_pixels]], dtype=float)
        except ValueError as exc:
            raise SchemaError(f"{path}: non-numeric P2 raster sample") from exc
    return img.reshape(height, width), maxval
