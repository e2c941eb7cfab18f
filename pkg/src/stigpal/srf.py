"""Stigmergic receptive field (SRF) core.

An SRF scores how closely a window of normalized samples matches a
reference ("archetype") pattern. The window is soft-discretized toward
regions of interest (clumping), each sample deposits a trapezoidal mark
in a 1-D intensity field over [0, 1] (the trail), the trail evaporates a
little at every time step, and the finished trail is compared against
the archetype's trail with a fuzzy Jaccard similarity. A final sigmoid
(activation) sharpens the similarity into the unit output.

Trails are plain float64 arrays of ``grid_cells`` non-negative
intensities; cell ``g`` covers the value-space point ``(g + 0.5) / G``.
All functions here are pure; nothing retains state between calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange


@dataclass(frozen=True)
class SrfParams:
    """The eight adapted scalars of one receptive field.

    The clumping map is the average of two cubic smoothsteps. The first
    ramps 0 to 0.5 over [low_mid_start, low_mid_end], the second 0.5 to
    1 over [mid_high_start, mid_high_end], leaving plateaus at 0, 0.5
    and 1 that act as the regions of interest.
    """

    low_mid_start: float
    low_mid_end: float
    mid_high_start: float
    mid_high_end: float
    mark_width: float       # trapezoid top width; base width is twice this
    evaporation: float      # per-step fractional intensity loss
    activation_start: float
    activation_end: float

    def validate(self) -> None:
        a1, b1, a2, b2 = (self.low_mid_start, self.low_mid_end,
                          self.mid_high_start, self.mid_high_end)
        if not (0.0 <= a1 < b1 <= a2 < b2 <= 1.0):
            raise ValueError(
                f"clumping inflections must satisfy 0 <= {a1} < {b1} <= {a2} < {b2} <= 1")
        if not (0.0 < self.mark_width <= 0.5):
            raise ValueError(f"mark_width must be in (0, 0.5], got {self.mark_width}")
        if not (0.0 < self.evaporation < 1.0):
            raise ValueError(f"evaporation must be in (0, 1), got {self.evaporation}")
        if not (0.0 <= self.activation_start < self.activation_end <= 1.0):
            raise ValueError(
                f"activation inflections must satisfy 0 <= {self.activation_start} "
                f"< {self.activation_end} <= 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.low_mid_start, self.low_mid_end,
                         self.mid_high_start, self.mid_high_end,
                         self.mark_width, self.evaporation,
                         self.activation_start, self.activation_end])

    @classmethod
    def from_array(cls, x) -> "SrfParams":
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class TrailConfig:
    """Discretization of the trail field.

    grid_cells: number of cells over [0, 1]; resolves mark widths down
        to ~2/grid_cells.
    intensity_floor: evaporated cells below this are zeroed, so an
        isolated mark eventually disappears instead of lingering forever.
    """

    grid_cells: int = 1000
    intensity_floor: float = 1e-3

    def validate(self) -> None:
        if self.grid_cells < 16:
            raise ValueError(f"grid_cells must be >= 16, got {self.grid_cells}")
        if not (0.0 <= self.intensity_floor < 1.0):
            raise ValueError(f"intensity_floor must be in [0, 1), got {self.intensity_floor}")


def cell_centers(grid_cells: int) -> np.ndarray:
    """Value-space centers of the trail cells."""
    return (np.arange(grid_cells) + 0.5) / grid_cells


def smoothstep(x, start: float, end: float):
    """Cubic ramp: 0 at or below start, 1 at or above end, 3t^2 - 2t^3 between.

    Continuous, non-decreasing, symmetric about the midpoint. Accepts
    scalars or arrays.
    """
    if start >= end:
        raise ValueError(f"smoothstep needs start < end, got {start} >= {end}")
    t = np.clip((np.asarray(x, dtype=float) - start) / (end - start), 0.0, 1.0)
    out = t * t * (3.0 - 2.0 * t)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def clump(x, params: SrfParams):
    """Soft-discretize normalized samples toward the plateaus 0, 0.5, 1."""
    lo = smoothstep(x, params.low_mid_start, params.low_mid_end)
    hi = smoothstep(x, params.mid_high_start, params.mid_high_end)
    return (lo + hi) / 2.0


def mark_profile(position: float, width: float, grid_cells: int) -> np.ndarray:
    """Additive trapezoid deposit for one sample.

    Peak intensity 1 within width/2 of the position, ramping linearly to
    0 at distance width (top width, base width 2*width). Cells outside
    [0, 1] do not exist, so the profile truncates at the boundaries.
    """
    d = np.abs(cell_centers(grid_cells) - position)
    return np.where(d <= 0.5 * width, 1.0,
                    np.where(d <= width, 2.0 - 2.0 * d / width, 0.0))


def evaporate(trail: np.ndarray, rate: float, intensity_floor: float = 1e-3) -> np.ndarray:
    """One time step of decay: every cell loses the given fraction.

    Cells that fall below the floor are zeroed. Returns a new array.
    """
    if not (0.0 < rate < 1.0):
        raise ValueError(f"evaporation rate must be in (0, 1), got {rate}")
    v = trail * (1.0 - rate)
    return np.where(v < intensity_floor, 0.0, v)


def build_trail(samples: np.ndarray, params: SrfParams, config: TrailConfig) -> np.ndarray:
    """Run a window through clumping and marking into a finished trail.

    Starts from an empty field; for each sample, the trail first
    evaporates one step and then receives a mark at the clumped sample
    position. Deterministic in its inputs.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size == 0:
        raise ValueError("samples must be a non-empty 1-D array")
    if np.any(samples < 0.0) or np.any(samples > 1.0):
        raise ValueError("samples must be normalized to [0, 1]")
    params.validate()
    config.validate()
    positions = clump(samples, params)
    trail = np.zeros(config.grid_cells)
    for p in positions:
        trail = evaporate(trail, params.evaporation, config.intensity_floor)
        trail = trail + mark_profile(p, params.mark_width, config.grid_cells)
    return trail


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Fuzzy Jaccard overlap of two trails on the same grid.

    Sum of cell-wise minima over sum of cell-wise maxima; equals the
    classic set Jaccard when both trails are 0/1-valued. Two all-zero
    trails are identically empty and score 1.
    """
    if a.shape != b.shape:
        raise ValueError(f"trail grids differ: {a.shape} vs {b.shape}")
    union = float(np.maximum(a, b).sum())
    if union == 0.0:
        return 1.0
    return float(np.minimum(a, b).sum()) / union


def activate(s: float, start: float, end: float) -> float:
    """Output sigmoid: suppress weak similarities, saturate strong ones."""
    return smoothstep(s, start, end)


def srf_evaluate(samples: np.ndarray, archetype_trail: np.ndarray,
                 params: SrfParams, config: TrailConfig) -> float:
    """Full receptive-field response of one window against one archetype.

    The archetype trail must have been built with the same params and
    config; the caller owns that pairing.
    """
    if archetype_trail.shape != (config.grid_cells,):
        raise ValueError(
            f"archetype trail has {archetype_trail.shape[0]} cells, "
            f"config expects {config.grid_cells}")
    trail = build_trail(samples, params, config)
    return activate(similarity(trail, archetype_trail),
                    params.activation_start, params.activation_end)


# ---------------------------------------------------------------------------
# Batched trail construction. Bit-identical to build_trail (same per-cell
# operations in the same order) but JIT-compiled and able to process many
# (window, params) rows at once. Training and bulk assessment go through
# this path; tests pin the equivalence.
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _trail_kernel(positions, widths, rates, floor, grid_cells):  # pragma: no cover
    n_rows, n_steps = positions.shape
    out = np.zeros((n_rows, grid_cells))
    for r in prange(n_rows):
        row = out[r]
        eps = widths[r]
        half = 0.5 * eps
        decay = 1.0 - rates[r]
        for k in range(n_steps):
            for g in range(grid_cells):
                v = row[g] * decay
                row[g] = 0.0 if v < floor else v
            p = positions[r, k]
            # support of the trapezoid, padded one cell for rounding safety
            g_lo = int(np.floor((p - eps) * grid_cells - 0.5)) - 1
            g_hi = int(np.ceil((p + eps) * grid_cells - 0.5)) + 1
            if g_lo < 0:
                g_lo = 0
            if g_hi > grid_cells - 1:
                g_hi = grid_cells - 1
            for g in range(g_lo, g_hi + 1):
                d = abs((g + 0.5) / grid_cells - p)
                if d <= half:
                    row[g] += 1.0
                elif d <= eps:
                    row[g] += 2.0 - 2.0 * d / eps
    return out


def build_trails_batch(positions: np.ndarray, widths: np.ndarray, rates: np.ndarray,
                       config: TrailConfig) -> np.ndarray:
    """Build one trail per row of pre-clumped positions.

    positions: (rows, steps) clumped sample positions in [0, 1]
    widths, rates: per-row mark width and evaporation rate
    Returns a (rows, grid_cells) intensity matrix.
    """
    positions = np.ascontiguousarray(positions, dtype=float)
    widths = np.ascontiguousarray(widths, dtype=float)
    rates = np.ascontiguousarray(rates, dtype=float)
    return _trail_kernel(positions, widths, rates,
                         config.intensity_floor, config.grid_cells)
