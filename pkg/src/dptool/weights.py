"""Comparison-class weights a(x) <= C (a(y) + |x-y|^alpha) and the
double-phase integrand they drive.

The defining constant is estimated as a sup over grid point pairs, the
infimal-convolution regularization replaces a weight by a continuous
comparable one, and ``double_phase`` evaluates the order-l integrand
H_l(x, z) = |z|^gamma_{p,l} + a(x)^{gamma_{q,l}/q} |z|^gamma_{q,l}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridError, GridFunction, Region

__all__ = [
    "Weight",
    "estimate_seminorm",
    "regularize",
    "double_phase",
    "double_phase_field",
]

_PAIR_BLOCK = 2048  # x-block size for the O(N^2) pair sweeps


@dataclass(frozen=True)
class Weight:
    """A nonnegative scalar weight with its comparison exponent."""

    a: GridFunction
    alpha: float
    seminorm_estimate: float = 1.0
    diverging: bool = False

    def __post_init__(self):
        if self.alpha <= 0:
            raise GridError(f"alpha must be positive, got {self.alpha}")
        if np.any(self.a.scalar() < 0):
            raise GridError("weight samples must be nonnegative")


def _region_points(a: GridFunction, region: Region | None):
    mask = np.ones(a.dims, dtype=bool) if region is None else region.mask_for(a)
    pts = a.cell_centers()[mask]
    vals = a.scalar()[mask]
    return pts, vals


def _alpha_power_of_sq(d2: np.ndarray, alpha: float) -> np.ndarray:
    """|d|^alpha from squared distances; sqrt chains for the common cases."""
    if alpha == 2.0:
        return d2
    if alpha == 1.0:
        return np.sqrt(d2)
    if alpha == 0.5:
        return np.sqrt(np.sqrt(d2))
    return d2 ** (alpha / 2.0)


def _min_convolution(pts_x, pts_y, vals_y, alpha: float) -> np.ndarray:
    """min over y of (a(y) + |x-y|^alpha) for each x, blockwise.

    Distances use exact per-axis differences, so the y = x term contributes
    exactly a(x) and the envelope never exceeds the input.
    """
    out = np.empty(len(pts_x), dtype=float)
    n = pts_x.shape[1]
    for start in range(0, len(pts_x), _PAIR_BLOCK):
        px = pts_x[start : start + _PAIR_BLOCK]
        d2 = (px[:, 0][:, None] - pts_y[:, 0][None, :]) ** 2
        for ax in range(1, n):
            d2 += (px[:, ax][:, None] - pts_y[:, ax][None, :]) ** 2
        out[start : start + _PAIR_BLOCK] = np.min(
            vals_y[None, :] + _alpha_power_of_sq(d2, alpha), axis=1
        )
    return out


def _sup_ratio(pts, vals, alpha: float) -> float:
    """sup over pairs of a(x) / (a(y) + |x-y|^alpha) = max a / (inf-convolution)."""
    env = _min_convolution(pts, pts, vals, alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(env > 0, vals / env, 0.0)
    return float(ratio.max()) if len(ratio) else 0.0


def estimate_seminorm(
    a: GridFunction,
    alpha: float,
    region: Region | None = None,
    refinement_factor: float = 2.0,
) -> tuple[float, bool]:
    """Estimate the comparison constant and flag divergence under refinement.

    Returns ``(estimate, diverging)``.  The estimate is the sup over all
    grid point pairs in the region of a(x)/(a(y)+|x-y|^alpha), floored at 1
    (the inequality always holds with constant 1 at x = y).  The weight is
    flagged diverging when the full-lattice estimate exceeds the stride-2
    sublattice estimate by more than ``refinement_factor``.
    """
    if alpha <= 0:
        raise GridError("alpha must be positive")
    if np.any(a.scalar() < 0):
        raise GridError("weight samples must be nonnegative")
    pts, vals = _region_points(a, region)
    if len(pts) == 0:
        raise GridError("empty region")
    est_fine = max(1.0, _sup_ratio(pts, vals, alpha))

    # one coarsening step: every other cell along each axis
    mask = np.ones(a.dims, dtype=bool) if region is None else region.mask_for(a)
    stride = np.zeros(a.dims, dtype=bool)
    stride[tuple(slice(None, None, 2) for _ in range(a.n))] = True
    sub = mask & stride
    pts_c = a.cell_centers()[sub]
    vals_c = a.scalar()[sub]
    if len(pts_c) >= 2:
        est_coarse = max(1.0, _sup_ratio(pts_c, vals_c, alpha))
    else:
        est_coarse = est_fine
    diverging = est_fine > refinement_factor * est_coarse
    return est_fine, diverging


def regularize(a: GridFunction, alpha: float, diverging: bool | None = None) -> GridFunction:
    """Infimal convolution: atilde(x) = min_y (a(y) + |x-y|^alpha).

    Minimizes over grid points only, so atilde <= a holds exactly (take
    y = x) and the output is reproducible bit for bit.  Pass ``diverging``
    from a prior ``estimate_seminorm`` call to skip the recheck.
    """
    if diverging is None:
        _est, diverging = estimate_seminorm(a, alpha)
    if diverging:
        raise GridError("weight comparison constant diverges under refinement")
    pts = a.cell_centers().reshape(-1, a.n)
    vals = a.scalar().reshape(-1)
    out = _min_convolution(pts, pts, vals, alpha)
    return a.with_values(out.reshape(a.dims)[..., None])


def double_phase(z_norm, a_val, gamma_p: float, gamma_q: float, q: float):
    """H(x, z) = |z|^gamma_p + a(x)^(gamma_q/q) |z|^gamma_q, elementwise."""
    z = np.asarray(z_norm, dtype=float)
    a = np.asarray(a_val, dtype=float)
    return z**gamma_p + a ** (gamma_q / q) * z**gamma_q


def double_phase_field(
    z_norm: GridFunction,
    weight: Weight,
    derived,
    q: float,
    ell: int,
) -> GridFunction:
    """Order-l double-phase integrand of a (derivative-norm) field."""
    gp = derived.gamma["p"][ell]
    gq = derived.gamma["q"][ell]
    vals = double_phase(z_norm.scalar(), weight.a.scalar(), gp, gq, q)
    return z_norm.with_values(vals[..., None])
