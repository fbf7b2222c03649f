"""Discrete maximal operators: centered, uncentered, fractional, restricted
and iterated, with the verification reports for their structural estimates
(composition, continuity modulus, pointwise potential-type bounds and the
weighted two-term bound).

The discrete ball family has lattice centers and radii
{h/2} u {h, 2h, 4h, ...} up to the grid diameter; the uncentered supremum
at x runs over family balls whose closure contains x, with candidate
centers quantized to a stride of one eighth of the radius.  Averages
treat the input as extended by zero outside the lattice, which is the right
reading for restricted operators.  Everything is a pure function of the
inputs, and the per-radius reductions are order-independent maxima, so
results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .grid import GridError, GridFunction, Region
from .weights import Weight

__all__ = [
    "MaximalSpec",
    "maximal_function",
    "iterated_maximal",
    "restricted_maximal",
    "composition_bound",
    "composition_report",
    "continuity_modulus_report",
    "hedberg_report",
    "weighted_hedberg_report",
]


@dataclass(frozen=True)
class MaximalSpec:
    """Parameters of one maximal operator application."""

    beta: float = 0.0
    mode: str = "uncentered"
    restriction: Region | None = None
    iterations: int = 1

    def __post_init__(self):
        if self.beta < 0:
            raise GridError("fractional order must be >= 0")
        if self.mode not in ("centered", "uncentered"):
            raise GridError(f"unknown mode {self.mode!r}")
        if self.iterations < 1:
            raise GridError("iterations must be >= 1")


# ---------------------------------------------------------------------------
# ball family and averages
# ---------------------------------------------------------------------------


def _radii_cells(dims) -> list[int]:
    """0 stands for the single-cell ball of radius h/2; then the dyadic
    ladder with midpoints (1, 2, 3, 4, 6, 8, 12, ...) up to the diameter."""
    diam = int(math.ceil(math.hypot(*dims)))
    radii = {0, 1, 2}
    k = 2
    while k < 2 * diam:
        radii.add(3 * k // 2)
        radii.add(2 * k)
        k *= 2
    return sorted(r for r in radii if r == 0 or r // 2 <= diam)


_DISC_CACHE: dict = {}


def _disc_kernel(n: int, r_cells: int) -> tuple[np.ndarray, int]:
    """Indicator of the lattice disc |d| <= r_cells and its cell count."""
    key = ("kernel", n, r_cells)
    if key not in _DISC_CACHE:
        ax = np.arange(-r_cells, r_cells + 1)
        mesh = np.meshgrid(*([ax] * n), indexing="ij")
        mask = sum(m * m for m in mesh) <= r_cells * r_cells
        _DISC_CACHE[key] = (mask.astype(float), int(mask.sum()))
    return _DISC_CACHE[key]


def _disc_offsets(n: int, r_cells: int, stride: int = 1) -> np.ndarray:
    key = ("offsets", n, r_cells, stride)
    if key not in _DISC_CACHE:
        if r_cells == 0:
            offs = np.zeros((1, n), dtype=int)
        else:
            ax = np.arange(-(r_cells // stride) * stride, r_cells + 1, stride)
            mesh = np.meshgrid(*([ax] * n), indexing="ij")
            pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
            pts = pts[np.sum(pts * pts, axis=1) <= r_cells * r_cells]
            offs = pts[np.lexsort(pts.T[::-1])]
        _DISC_CACHE[key] = offs
    return _DISC_CACHE[key]


def _ball_average(absvals: np.ndarray, n: int, r_cells: int) -> np.ndarray:
    """Average of |f| (zero-extended) over the lattice disc, all centers."""
    if r_cells == 0:
        return absvals
    diam2 = sum((d - 1) ** 2 for d in absvals.shape)
    kernel, count = _disc_kernel(n, r_cells)
    if r_cells * r_cells >= diam2:
        # the disc covers the whole lattice from any center
        return np.full_like(absvals, absvals.sum() / count)
    out = fftconvolve(absvals, kernel, mode="same") / count
    np.maximum(out, 0.0, out=out)
    # kill fft noise so that e.g. constant inputs stay exactly constant
    peak = absvals.max()
    out[out < peak * 1e-13] = 0.0
    return out


def _shift_max(acc: np.ndarray, arr: np.ndarray, d: np.ndarray) -> None:
    """acc = max(acc, arr shifted by d), in place, zero-extended candidates skipped."""
    n = arr.ndim
    src = [slice(None)] * n
    dst = [slice(None)] * n
    for ax in range(n):
        k = int(d[ax])
        if k > 0:
            dst[ax] = slice(k, None)
            src[ax] = slice(None, -k)
        elif k < 0:
            dst[ax] = slice(None, k)
            src[ax] = slice(-k, None)
    view = acc[tuple(dst)]
    np.maximum(view, arr[tuple(src)], out=view)


def maximal_function(f: GridFunction, spec: MaximalSpec) -> GridFunction:
    """Pointwise supremum of r^beta times ball averages of |f|.

    Scalar input, or the Euclidean norm is taken first.  The restricted
    variant multiplies by the region indicator before averaging.
    """
    if spec.beta >= f.n:
        raise GridError(f"fractional order {spec.beta} must be < dimension {f.n}")
    vals = np.sqrt(np.sum(f.values**2, axis=-1)) if f.components > 1 else np.abs(f.scalar())
    if spec.restriction is not None:
        vals = np.where(spec.restriction.mask_for(f), vals, 0.0)

    out = vals.copy() if spec.iterations >= 1 else vals
    for _ in range(spec.iterations):
        out = _maximal_once(out, f.n, f.spacing, spec.beta, spec.mode)
        if spec.restriction is not None and spec.iterations > 1:
            # iterated restricted operator re-restricts between applications
            out = np.where(spec.restriction.mask_for(f), out, 0.0)
    return f.with_values(out[..., None])


def _maximal_once(vals: np.ndarray, n: int, h: float, beta: float, mode: str) -> np.ndarray:
    dims = vals.shape
    result = np.zeros_like(vals)
    for r_cells in _radii_cells(dims):
        radius = 0.5 * h if r_cells == 0 else r_cells * h
        avg = _ball_average(vals, n, r_cells)
        scale = radius**beta if beta else 1.0
        if mode == "centered" or r_cells == 0:
            np.maximum(result, scale * avg, out=result)
            continue
        stride = max(1, r_cells // 8)
        cand = scale * avg
        acc = cand.copy()
        for d in _disc_offsets(n, r_cells, stride):
            if not d.any():
                continue
            _shift_max(acc, cand, d)
        np.maximum(result, acc, out=result)
    return result


def restricted_maximal(f: GridFunction, region: Region, beta: float = 0.0, mode: str = "uncentered") -> GridFunction:
    return maximal_function(f, MaximalSpec(beta=beta, mode=mode, restriction=region))


def iterated_maximal(f: GridFunction, region: Region | None, ell: int, beta: float = 0.0) -> GridFunction:
    """ell-fold composition of the restricted uncentered maximal operator."""
    if ell < 1:
        raise GridError("iteration count must be >= 1")
    out = f
    for _ in range(ell):
        out = maximal_function(out, MaximalSpec(beta=beta, mode="uncentered", restriction=region))
    return out


# ---------------------------------------------------------------------------
# verification reports
# ---------------------------------------------------------------------------


def composition_bound(n: int, beta: float) -> float:
    """Reference constant for M(M_beta f) <= c M_beta f.

    Chain: the centered composition estimate splits into a far part bounded
    by 2^(n-beta) M_beta^c and a dyadic near part bounded by
    4^n/(2^beta - 1) M_beta^c; converting both outer and inner operators to
    their uncentered versions costs the sandwich factors 2^n and 2^(n-beta).
    """
    if not (0 < beta < n):
        raise GridError("composition bound needs beta in (0, n)")
    return 2.0 ** (2 * n - beta) * (2.0 ** (n - beta) + 4.0**n / (2.0**beta - 1.0))


def _ratio_sup(num: np.ndarray, den: np.ndarray, max_excluded_frac: float = 1e-3):
    pos = den > 0
    excluded = int(np.size(den) - pos.sum())
    frac = excluded / den.size
    sup = float((num[pos] / den[pos]).max()) if pos.any() else 0.0
    return sup, excluded, frac <= max_excluded_frac or num.max() == 0.0


def composition_report(f: GridFunction, beta: float) -> dict:
    """Measured sup of M(M_beta f) / M_beta f against the reference constant."""
    if not (0 < beta < f.n):
        raise GridError("composition report needs beta in (0, n)")
    mbf = maximal_function(f, MaximalSpec(beta=beta))
    mmbf = maximal_function(mbf, MaximalSpec(beta=0.0))
    sup, excluded, ok = _ratio_sup(mmbf.scalar(), mbf.scalar())
    bound = composition_bound(f.n, beta)
    return {
        "sup_ratio": sup,
        "bound": bound,
        "excluded_points": excluded,
        "pass": bool(ok and sup <= bound),
    }


def continuity_modulus_report(f: GridFunction, beta: float, shifts: tuple = (1, 2, 4, 8)) -> dict:
    """Empirical modulus of continuity of M_beta f over lattice shifts."""
    mbf = maximal_function(f, MaximalSpec(beta=beta)).scalar()
    table = {}
    for k in shifts:
        worst = 0.0
        for axis in range(f.n):
            if f.dims[axis] <= k:
                continue
            sl_a = [slice(None)] * f.n
            sl_b = [slice(None)] * f.n
            sl_a[axis] = slice(k, None)
            sl_b[axis] = slice(None, -k)
            worst = max(worst, float(np.abs(mbf[tuple(sl_a)] - mbf[tuple(sl_b)]).max()))
        table[k * f.spacing] = worst
    hs = sorted(table)
    monotone = all(table[hs[i]] <= table[hs[i + 1]] + 1e-14 for i in range(len(hs) - 1))
    return {"modulus": table, "monotone": monotone}


def _weighted_average_residual(u: GridFunction, region: Region, eta: GridFunction, upto: int) -> float:
    from .grid import derivative_array, weighted_average

    worst = 0.0
    scale = 1.0 + float(np.abs(u.values).max())
    for k in range(upto):
        for sig, df in derivative_array(u, k).items():
            avg = weighted_average(df, region, eta)
            worst = max(worst, float(np.abs(avg).max()) / scale)
    return worst


def hedberg_report(
    u: GridFunction,
    ell: int,
    region: Region,
    eta: GridFunction,
    radius: float,
    mean_tol: float = 1e-8,
) -> dict:
    """sup_B |u| / (R^l M_B^{2l}(|D^l u|)): pointwise potential-type bound.

    Requires the eta-weighted averages of all derivatives of order < l to
    vanish (subtract the weighted mean-value polynomial first) and eta mass
    at least the half-radius ball volume.
    """
    from .grid import derivative_norm, integrate, measure

    eta_mass = float(integrate(eta, region)[0])
    if eta_mass < measure(u, region) / 2**u.n - 1e-12:
        raise GridError("weight mass below the half-radius ball volume")
    resid = _weighted_average_residual(u, region, eta, ell)
    if resid > mean_tol:
        raise GridError(f"weighted averages below order {ell} do not vanish: residual {resid:.3e}")

    dnorm = derivative_norm(u, ell)
    m2l = iterated_maximal(dnorm, region, 2 * ell)
    mask = region.mask_for(u)
    num = np.sqrt(np.sum(u.values**2, axis=-1))[mask]
    den = (radius**ell) * m2l.scalar()[mask]
    sup, excluded, ok = _ratio_sup(num, den)
    return {"sup_ratio": sup, "excluded_points": excluded, "pass": bool(ok and math.isfinite(sup))}


def weighted_hedberg_report(
    f: GridFunction,
    weight: Weight,
    q: float,
    beta: float,
    ell: int,
    region: Region,
    radius: float,
) -> dict:
    """Two-term bound for the weighted maximal product.

    Checks a(x)^{1/q} M_B^l(f) against
    c [ M_B^l(a^{1/q} f) + M_beta(M^{l-1}(f chi_B)) ] on the ball; the
    estimate is stated for radii at most one, and for the fractional order
    in (0, min(alpha/q, n/t)].
    """
    if radius > 1.0:
        raise GridError("weighted bound assumes ball radius <= 1")
    if not (0 < beta < f.n):
        raise GridError("fractional order must lie in (0, n)")
    a_vals = weight.a.scalar()
    lhs = a_vals ** (1.0 / q) * iterated_maximal(f, region, ell).scalar()
    t1 = iterated_maximal(f.with_values((a_vals ** (1.0 / q) * np.abs(f.scalar()))[..., None]), region, ell).scalar()
    chi = f.with_values(np.where(region.mask_for(f), np.abs(f.scalar()), 0.0)[..., None])
    inner = iterated_maximal(chi, None, ell - 1) if ell > 1 else chi
    t2 = maximal_function(inner, MaximalSpec(beta=beta)).scalar()
    mask = region.mask_for(f)
    sup, excluded, ok = _ratio_sup(lhs[mask], (t1 + t2)[mask])
    return {"sup_ratio": sup, "excluded_points": excluded, "pass": bool(ok and math.isfinite(sup))}
