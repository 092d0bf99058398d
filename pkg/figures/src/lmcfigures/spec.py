"""Figure specifications: what to draw, from which files, into which image.

A :class:`FigureSpec` can be built in code, assembled from command-line
flags, or loaded from a TOML file holding an array of ``[[figure]]``
tables. Relative input and output paths in a spec file are resolved
against the file's own directory, so a spec can live next to the run
directories it describes.

``labels`` name the curves of a trajectory figure or the panels of an
image grid, one per input file; the sweep kinds take their legend from
the ``method`` column of the summary files instead.
"""

from __future__ import annotations

import glob
import os
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

__all__ = [
    "KINDS",
    "OUTPUT_SUFFIXES",
    "SchemaError",
    "FigureSpec",
    "expand_inputs",
    "load_specs",
]

KINDS = ("trajectory", "re_vs_tau", "cv_vs_tau", "image_grid")
OUTPUT_SUFFIXES = (".png", ".svg")


class SchemaError(ValueError):
    """An input file or figure spec does not match the documented layout."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure: a kind, its input files (or globs), and an output path.

    ``moment_order`` selects the summary row plotted by the sweep kinds.
    ``burn_in`` controls the shaded prefix of a trajectory figure; leave
    it as None to pick the value up from the config.toml echo that the
    runner writes next to each chain file.
    """

    kind: str
    inputs: tuple[str, ...]
    output: str
    title: str = ""
    labels: tuple[str, ...] = ()
    moment_order: int = 2
    burn_in: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(str(p) for p in self.inputs))
        object.__setattr__(self, "labels", tuple(str(l) for l in self.labels))
        if self.kind not in KINDS:
            raise SchemaError(
                f"unknown figure kind {self.kind!r}; expected one of {', '.join(KINDS)}"
            )
        if not self.inputs:
            raise SchemaError("a figure spec needs at least one input file or glob")
        suffix = Path(self.output).suffix.lower()
        if suffix not in OUTPUT_SUFFIXES:
            raise SchemaError(
                f"output {self.output!r} must end in {' or '.join(OUTPUT_SUFFIXES)}"
            )
        if self.moment_order < 1:
            raise SchemaError(f"moment_order must be positive, got {self.moment_order}")
        if self.burn_in is not None and self.burn_in < 0:
            raise SchemaError(f"burn_in must be nonnegative, got {self.burn_in}")


def expand_inputs(spec: FigureSpec) -> list[Path]:
    """Resolve the spec's input entries to concrete files, in entry order.

    Glob entries expand to their sorted matches; a literal entry must
    exist. When the spec carries labels, their count must match the
    expanded file list.
    """
    files: list[Path] = []
    for pattern in spec.inputs:
        if glob.has_magic(pattern):
            matches = sorted(glob.glob(pattern, recursive=True))
            if not matches:
                raise SchemaError(f"input pattern {pattern!r} matched no files")
            files.extend(Path(m) for m in matches)
        else:
            path = Path(pattern)
            if not path.is_file():
                raise SchemaError(f"input file {pattern!r} does not exist")
            files.append(path)
    if spec.labels and len(spec.labels) != len(files):
        raise SchemaError(
            f"got {len(spec.labels)} labels for {len(files)} input files; "
            "drop the labels or give one per file"
        )
    return files


_SPEC_KEYS = {"kind", "inputs", "output", "title", "labels", "moment_order", "burn_in"}
_REQUIRED_KEYS = {"kind", "inputs", "output"}


def _resolve(base: Path, entry: str) -> str:
    return entry if os.path.isabs(entry) else str(base / entry)


def load_specs(path: str | os.PathLike) -> list[FigureSpec]:
    """Read every ``[[figure]]`` table of a TOML spec file."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"{path}: not valid TOML ({exc})") from exc
    figures = doc.pop("figure", None)
    if doc:
        stray = sorted(doc)[0]
        raise SchemaError(
            f"{path}: unknown top-level key {stray!r}; figures live in [[figure]] tables"
        )
    if not isinstance(figures, list) or not figures:
        raise SchemaError(f"{path}: expected at least one [[figure]] table")
    specs = []
    for i, table in enumerate(figures, start=1):
        unknown = sorted(set(table) - _SPEC_KEYS)
        if unknown:
            raise SchemaError(f"{path}: figure {i} has unknown key {unknown[0]!r}")
        missing = sorted(_REQUIRED_KEYS - set(table))
        if missing:
            raise SchemaError(f"{path}: figure {i} is missing {missing[0]!r}")
        inputs = table["inputs"]
        if isinstance(inputs, str):
            inputs = [inputs]
        burn_in = table.get("burn_in")
        specs.append(
            FigureSpec(
                kind=table["kind"],
                inputs=tuple(_resolve(path.parent, str(p)) for p in inputs),
                output=_resolve(path.parent, str(table["output"])),
                title=str(table.get("title", "")),
                labels=tuple(table.get("labels", ())),
                moment_order=int(table.get("moment_order", 2)),
                burn_in=None if burn_in is None else int(burn_in),
            )
        )
    return specs
