"""Logarithmic frequency grids, per-decade density reduction and time accounting.

An EIS sweep visits frequencies in decreasing order from ``f_start`` down to
``f_end``, log-spaced at a fixed density (points per decade, PPD).  Because
each point costs ``n_p`` excitation periods, low frequencies dominate the
total measurement time; the lowest decade of a uniform grid eats roughly 90%
of it.  The reduction operation thins the grid below a threshold frequency to
buy time back, which is the starting point of the adjustment loop in
:mod:`eisopt.design`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, SpectrumFormatError

# Two frequencies closer than this (relative, in linear Hz) are treated as
# the same grid point when merging piecewise-generated segments.
MERGE_RTOL = 1e-9


@dataclass(frozen=True)
class PpdReduction:
    """Record of one density reduction: grid points at or below
    ``threshold_hz`` were regenerated at ``ppd`` points per decade."""

    threshold_hz: float
    ppd: int


@dataclass(frozen=True)
class FrequencyGrid:
    """Ordered measurement frequencies, strictly decreasing, in Hz.

    ``ppd_default`` is the density the grid was generated with (None for
    grids loaded from bare frequency lists).  ``reductions`` records any
    density reductions applied, newest last.
    """

    frequencies: tuple
    ppd_default: int | None = None
    reductions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.frequencies)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "reductions", tuple(self.reductions))
        if len(freqs) < 2:
            raise DomainError("a frequency grid needs at least 2 points")
        arr = np.array(freqs)
        if not np.all(arr > 0.0):
            raise DomainError("frequencies must be positive")
        if not np.all(np.diff(arr) < 0.0):
            raise DomainError("frequencies must be strictly decreasing")
        if self.ppd_default is not None and self.ppd_default < 1:
            raise DomainError("ppd_default must be >= 1")

    @property
    def n(self) -> int:
        return len(self.frequencies)

    def __len__(self) -> int:
        return len(self.frequencies)

    @property
    def f_start(self) -> float:
        return self.frequencies[0]

    @property
    def f_end(self) -> float:
        return self.frequencies[-1]

    def as_array(self) -> np.ndarray:
        return np.array(self.frequencies)

    def replace_frequency(self, index: int, new_hz: float) -> "FrequencyGrid":
        """Return a grid with one point moved and the ordering restored."""
        if not 0 <= index < len(self.frequencies):
            raise DomainError(f"grid index {index} out of range")
        if new_hz <= 0.0:
            raise DomainError("replacement frequency must be positive")
        freqs = list(self.frequencies)
        freqs[index] = float(new_hz)
        freqs.sort(reverse=True)
        return FrequencyGrid(tuple(freqs), self.ppd_default, self.reductions)

    def to_json_dict(self) -> dict:
        return {
            "frequencies_hz": list(self.frequencies),
            "ppd_default": self.ppd_default,
            "reductions": [
                {"threshold_hz": r.threshold_hz, "ppd": r.ppd} for r in self.reductions
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "FrequencyGrid":
        try:
            freqs = tuple(float(f) for f in data["frequencies_hz"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SpectrumFormatError(f"bad grid JSON: {exc}") from exc
        reductions = tuple(
            PpdReduction(float(r["threshold_hz"]), int(r["ppd"]))
            for r in data.get("reductions", [])
        )
        ppd = data.get("ppd_default")
        return cls(freqs, None if ppd is None else int(ppd), reductions)


@dataclass(frozen=True)
class TimeModel:
    """Experiment duration accounting: n_p excitation periods per point."""

    n_p: int
    t_tot: float

    def __post_init__(self):
        if self.n_p < 1:
            raise DomainError("n_p must be a positive integer")


def log_spaced(f_start: float, f_end: float, ppd: int) -> FrequencyGrid:
    """Generate the standard log-spaced sweep grid.

    The k-th frequency is 10**(log10(f_start) - k/ppd) and the point count
    is floor(1.5 + ppd * (log10(f_start) - log10(f_end))), so integer-decade
    spans include both endpoints exactly.
    """
    if not (f_start > f_end > 0.0):
        raise DomainError(
            f"need f_start > f_end > 0, got f_start={f_start}, f_end={f_end}"
        )
    ppd = int(ppd)
    if ppd < 1:
        raise DomainError("ppd must be >= 1")
    span = math.log10(f_start) - math.log10(f_end)
    n = math.floor(1.5 + ppd * span)
    k = np.arange(n)
    freqs = 10.0 ** (math.log10(f_start) - k / ppd)
    return FrequencyGrid(tuple(freqs), ppd_default=ppd)


def log_spaced_inclusive(f_start: float, f_end: float, ppd: int) -> FrequencyGrid:
    """Log-spaced grid counting both decade edges toward the density.

    Here "ppd" points span one decade inclusively, i.e. the spacing is
    1/(ppd - 1) decades (1/max(ppd - 1, 1) for ppd = 1).  Over the standard
    6-decade sweep this yields 55 points at ppd 10 instead of 61: the
    fencepost sibling of :func:`log_spaced`.  Reduced-density segments
    produced by :func:`reduce_ppd` follow the same convention, so grids
    from this constructor are the consistent baseline for density-reduction
    comparisons (per-parameter variance ratios, volume references).
    """
    if not (f_start > f_end > 0.0):
        raise DomainError(
            f"need f_start > f_end > 0, got f_start={f_start}, f_end={f_end}"
        )
    ppd = int(ppd)
    if ppd < 1:
        raise DomainError("ppd must be >= 1")
    span = math.log10(f_start) - math.log10(f_end)
    spacing = 1.0 / max(ppd - 1, 1)
    intervals = max(1, round(span / spacing))
    freqs = np.logspace(math.log10(f_start), math.log10(f_end), intervals + 1)
    return FrequencyGrid(tuple(freqs), ppd_default=ppd)


def reduce_ppd(grid: FrequencyGrid, f_threshold: float, ppd_low: int) -> FrequencyGrid:
    """Thin the grid at and below ``f_threshold`` to ``ppd_low`` points per decade.

    Points above the threshold are kept verbatim.  The low segment is
    regenerated log-spaced from the threshold down to the grid's last
    frequency; its density convention counts both decade endpoints, i.e.
    ``ppd_low`` points span one decade inclusively (spacing 1/(ppd_low - 1)
    decades), which is how reduced sweeps are conventionally specified.
    ``ppd_low`` equal to the grid's default density is the identity.
    """
    if grid.ppd_default is None:
        raise DomainError("grid has no recorded default density; cannot reduce")
    ppd_low = int(ppd_low)
    if not 1 <= ppd_low <= grid.ppd_default:
        raise DomainError(
            f"ppd_low must be in [1, {grid.ppd_default}], got {ppd_low}"
        )
    if not grid.f_end <= f_threshold <= grid.f_start:
        raise DomainError(
            f"threshold {f_threshold} Hz outside grid range "
            f"[{grid.f_end}, {grid.f_start}] Hz"
        )
    if ppd_low == grid.ppd_default:
        return grid

    upper = [f for f in grid.frequencies if f > f_threshold * (1.0 + MERGE_RTOL)]
    span = math.log10(f_threshold) - math.log10(grid.f_end)
    if span <= MERGE_RTOL:
        low = [float(f_threshold)]
    else:
        spacing = 1.0 / max(ppd_low - 1, 1)
        intervals = max(1, round(span / spacing))
        low = list(
            np.logspace(math.log10(f_threshold), math.log10(grid.f_end), intervals + 1)
        )

    merged = _merge_decreasing(upper + low)
    return FrequencyGrid(
        tuple(merged),
        ppd_default=grid.ppd_default,
        reductions=grid.reductions + (PpdReduction(float(f_threshold), ppd_low),),
    )


def _merge_decreasing(values):
    """Drop near-duplicate neighbours (relative tolerance MERGE_RTOL)."""
    merged = []
    for v in values:
        if merged and abs(merged[-1] - v) <= MERGE_RTOL * abs(merged[-1]):
            continue
        merged.append(float(v))
    return merged


def total_time(grid: FrequencyGrid, n_p: int = 5) -> float:
    """Total sweep duration in seconds: n_p periods at every frequency."""
    n_p = int(n_p)
    if n_p < 1:
        raise DomainError("n_p must be a positive integer")
    return float(n_p * np.sum(1.0 / grid.as_array()))


def time_model(grid: FrequencyGrid, n_p: int = 5) -> TimeModel:
    return TimeModel(n_p=int(n_p), t_tot=total_time(grid, n_p))


def save_grid_text(grid: FrequencyGrid, path) -> None:
    """One frequency (Hz) per line, full double precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for f in grid.frequencies:
            fh.write(f"{f!r}\n")


def load_grid_text(path) -> FrequencyGrid:
    freqs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                freqs.append(float(text))
            except ValueError as exc:
                raise SpectrumFormatError(
                    f"not a frequency: {text!r}", line_number=lineno
                ) from exc
    if len(freqs) < 2:
        raise SpectrumFormatError("grid file has fewer than 2 frequencies")
    return FrequencyGrid(tuple(freqs))


def save_grid_json(grid: FrequencyGrid, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(grid.to_json_dict(), fh, indent=2)
        fh.write("\n")


def load_grid_json(path) -> FrequencyGrid:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpectrumFormatError(f"invalid grid JSON: {exc}") from exc
    return FrequencyGrid.from_json_dict(data)
