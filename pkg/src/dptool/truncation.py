"""Lipschitz truncation on the grid.

Pipeline: build the gauge fields g and G from iterated maximal functions of
the double-phase integrands and the data terms, fix the level floor, take
the good set where G stays below the level, Whitney-cover its complement,
and replace the localized deviation v = (u - P) eta there by the partition
blend of per-ball weighted mean-value polynomials.  The result agrees with
v bitwise on the good set, is supported in the 4R-ball, and carries
certified derivative, oscillation, transfer and mean-oscillation bounds,
all measured and recorded per run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exponents import DerivedExponents, ExponentConfig
from .grid import (
    GridError,
    GridFunction,
    ball,
    derivative_norm,
    mean_over,
    mi_power,
    multi_indices,
    multi_indices_upto,
    partial_derivative,
)
from .maximal import MaximalSpec, maximal_function
from .meanpoly import MVPolynomial, fit, fit_on_cells
from .weights import Weight, double_phase_field
from .whitney import PartitionOfUnity, WhitneyCover, cover, partition_of_unity, smoothstep

__all__ = [
    "TruncationConfig",
    "GoodSetFields",
    "TruncationResult",
    "smooth_cutoff",
    "default_data",
    "assemble_g",
    "lambda_floor",
    "level_set",
    "truncate",
    "derivative_bounds_report",
    "oscillation_report",
    "polynomial_transfer_report",
    "admissibility_report",
]


@dataclass(frozen=True)
class TruncationConfig:
    """Geometry and level selection for one truncation run."""

    center: np.ndarray
    R: float
    lambda_mult: float = 1.5
    lam: float | None = None  # explicit level overrides lambda_mult
    delta: float | None = None  # defaults to delta1 + 0.9 (1 - delta1)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.R <= 0:
            raise GridError("ball radius must be positive")


@dataclass
class GoodSetFields:
    """The gauge g, its scaled maximal G, and the data majorant F."""

    g: GridFunction
    G: GridFunction
    F0: GridFunction
    F: GridFunction
    dnorms: dict
    H: dict
    psi: GridFunction
    delta: float
    delta0: float
    R0_data: float


@dataclass
class TruncationResult:
    v: GridFunction
    v_lambda: GridFunction
    good_mask: np.ndarray
    bad_mask: np.ndarray
    cover: WhitneyCover
    pou: PartitionOfUnity
    local_polys: list
    global_poly: MVPolynomial
    lam: float
    lambda0: float
    goodset: GoodSetFields
    config: TruncationConfig
    cfg: ExponentConfig
    derived: DerivedExponents
    weight: Weight
    eta: GridFunction
    ball_cells: list = field(default_factory=list)
    ball_psi: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# cutoffs and data defaults
# ---------------------------------------------------------------------------


def smooth_cutoff(grid: GridFunction, center, inner: float, outer: float) -> GridFunction:
    """Radial C-infinity cutoff: 1 inside radius ``inner``, 0 outside ``outer``."""
    if not (0 < inner < outer):
        raise GridError("need 0 < inner < outer")
    c = np.asarray(center, dtype=float)
    d = np.linalg.norm(grid.cell_centers() - c, axis=-1)
    vals = 1.0 - smoothstep((d - inner) / (outer - inner))
    return grid.with_values(vals[..., None])


def default_data(grid: GridFunction, cfg: ExponentConfig) -> dict:
    """Model-system data: all lower-order terms zero, top-order g identically 1."""
    zero = grid.with_values(np.zeros(grid.dims)[..., None])
    one = grid.with_values(np.ones(grid.dims)[..., None])
    data = {
        "f_p": zero,
        "f_q": zero,
        "g": {},
        "h": {},
    }
    for r in ("p", "q"):
        for ell in range(cfg.m + 1):
            data["g"][(r, ell)] = one if ell == cfg.m else zero
            data["h"][(r, ell)] = zero
    return data


# ---------------------------------------------------------------------------
# gauge assembly
# ---------------------------------------------------------------------------


def _iter_maximal_field(vals: np.ndarray, grid: GridFunction, times: int, beta: float = 0.0) -> np.ndarray:
    out = vals
    for _ in range(times):
        gf = grid.with_values(out[..., None])
        out = maximal_function(gf, MaximalSpec(beta=0.0)).scalar()
    if beta > 0.0:
        gf = grid.with_values(out[..., None])
        out = maximal_function(gf, MaximalSpec(beta=beta)).scalar()
    return out


def assemble_g(
    u: GridFunction,
    weight: Weight,
    cfg: ExponentConfig,
    derived: DerivedExponents,
    tc: TruncationConfig,
    data: dict | None = None,
    reference_mask: np.ndarray | None = None,
) -> GoodSetFields:
    """Build g, G = M(g)^(1/delta0), F0 and the majorant F.

    ``reference_mask`` replaces the cutoff in the maximal terms of F (the
    fixed right-hand side of the energy scans needs a ball-independent
    majorant); it defaults to the whole grid box.
    """
    if data is None:
        data = default_data(u, cfg)
    d0 = derived.delta0
    delta1 = (1.0 + d0) / 2.0
    delta = tc.delta if tc.delta is not None else delta1 + 0.9 * (1.0 - delta1)
    if not (delta1 <= delta < 1.0):
        raise GridError(f"delta must lie in [{delta1}, 1)")

    psi = smooth_cutoff(u, tc.center, 2.0 * tc.R, 3.0 * tc.R)
    psi_vals = psi.scalar()
    ref = np.ones(u.dims, dtype=bool) if reference_mask is None else np.asarray(reference_mask, dtype=bool)

    dnorms = {ell: derivative_norm(u, ell) for ell in range(cfg.m + 1)}
    H = {
        ell: double_phase_field(dnorms[ell], weight, derived, cfg.q, ell)
        for ell in range(cfg.m + 1)
    }

    # F0: data powers plus the fractional-maximal derivative terms
    F0_vals = np.zeros(u.dims, dtype=float)
    for r in ("p", "q"):
        for ell in range(cfg.m):
            s_hat = derived.s_hat[r][ell]
            if not math.isinf(s_hat):
                F0_vals += data["g"][(r, ell)].scalar() ** s_hat
        for ell in range(cfg.m + 1):
            t_hat = derived.t_hat[r][ell]
            F0_vals += data["h"][(r, ell)].scalar() ** t_hat
    for ell in range(cfg.m + 1):
        beta_ell = derived.beta_ell[ell]
        gq = derived.gamma["q"][ell]
        frac = _iter_maximal_field(dnorms[ell].scalar() * psi_vals, u, 2 * ell + 1, beta=beta_ell)
        F0_vals += frac**gq
    F0 = u.with_values(F0_vals[..., None])

    # g and G
    g_vals = np.zeros(u.dims, dtype=float)
    for ell in range(cfg.m + 1):
        g_vals += _iter_maximal_field(H[ell].scalar() ** d0 * psi_vals, u, 2 * ell + 1)
    g_vals = (g_vals + F0_vals**d0) * psi_vals
    g = u.with_values(g_vals[..., None])
    G_vals = maximal_function(g, MaximalSpec()).scalar() ** (1.0 / d0)
    G = u.with_values(G_vals[..., None])

    # F: majorant with the reference-mask maximal terms
    F_vals = F0_vals + 1.0 + data["f_p"].scalar() + weight.a.scalar() * data["f_q"].scalar()
    for ell in range(cfg.m):
        term = _iter_maximal_field(H[ell].scalar() ** d0 * ref, u, 2 * ell + 1)
        F_vals += term ** (1.0 / d0)
    F = u.with_values(F_vals[..., None])

    # data-driven smallness radius from the reference-restricted norms
    R0 = 0.5 * (1.0 - 1e-9)
    for ell in range(cfg.m + 1):
        gp = derived.gamma["p"][ell]
        gq = derived.gamma["q"][ell]
        expo = cfg.alpha / cfg.q - cfg.n * (1.0 / (gp * d0) - 1.0 / (gq * d0))
        m_field = _iter_maximal_field(dnorms[ell].scalar() * ref, u, 2 * ell + 1)
        norm = float(np.sum(m_field[ref] ** (gp * d0)) * u.cell_volume) ** (1.0 / (gp * d0))
        K = norm ** (1.0 - gp / gq)
        if K + 1.0 > 1.0 and expo > 0:
            R0 = min(R0, (1.0 / (K + 1.0)) ** (1.0 / expo))
    return GoodSetFields(
        g=g, G=G, F0=F0, F=F, dnorms=dnorms, H=H, psi=psi,
        delta=delta, delta0=d0, R0_data=R0,
    )


def global_majorant(
    u: GridFunction,
    weight: Weight,
    cfg: ExponentConfig,
    derived: DerivedExponents,
    data: dict | None = None,
    omega_mask: np.ndarray | None = None,
) -> GridFunction:
    """Ball-independent majorant F for the energy scans.

    Same structure as the in-pipeline majorant but with the cutoff replaced
    by the domain indicator in every maximal term, so one fixed field
    dominates the data contribution of every scanned ball.
    """
    if data is None:
        data = default_data(u, cfg)
    d0 = derived.delta0
    ref = np.ones(u.dims, dtype=bool) if omega_mask is None else np.asarray(omega_mask, dtype=bool)
    dnorms = {ell: derivative_norm(u, ell) for ell in range(cfg.m + 1)}
    F_vals = np.ones(u.dims, dtype=float)
    F_vals += data["f_p"].scalar() + weight.a.scalar() * data["f_q"].scalar()
    for r in ("p", "q"):
        for ell in range(cfg.m):
            s_hat = derived.s_hat[r][ell]
            if not math.isinf(s_hat):
                F_vals += data["g"][(r, ell)].scalar() ** s_hat
        for ell in range(cfg.m + 1):
            F_vals += data["h"][(r, ell)].scalar() ** derived.t_hat[r][ell]
    for ell in range(cfg.m + 1):
        beta_ell = derived.beta_ell[ell]
        gq = derived.gamma["q"][ell]
        frac = _iter_maximal_field(dnorms[ell].scalar() * ref, u, 2 * ell + 1, beta=beta_ell)
        F_vals += frac**gq
    for ell in range(cfg.m):
        H_ell = double_phase_field(dnorms[ell], weight, derived, cfg.q, ell)
        term = _iter_maximal_field(H_ell.scalar() ** d0 * ref, u, 2 * ell + 1)
        F_vals += term ** (1.0 / d0)
    return u.with_values(F_vals[..., None])


def lambda_floor(gs: GoodSetFields, grid: GridFunction, tc: TruncationConfig, probe_mults=(1.01,)) -> dict:
    """Level floor 6^n (avg_{B3R} G^delta)^(1/delta) + 6^n, with the
    containment check that above it the bad set stays inside the 4R-ball."""
    n = grid.n
    B3 = ball(tc.center, 3.0 * tc.R)
    avg = float(mean_over(gs.G, B3, power=gs.delta)[0])
    lam0 = 6.0**n * avg ** (1.0 / gs.delta) + 6.0**n
    G = gs.G.scalar()
    centers = grid.cell_centers()
    dist = np.linalg.norm(centers - tc.center, axis=-1)
    containment = {}
    for mult in probe_mults:
        lam = mult * lam0
        outside = (G > lam) & (dist >= 4.0 * tc.R)
        containment[mult] = not bool(outside.any())
    return {"lambda0": lam0, "containment": containment, "avg_G_delta": avg}


def level_set(gs_or_G, lam: float, grid: GridFunction | None = None) -> dict:
    """Good-set mask {G <= lambda} with a boundary-cell (Jordan) report.

    The straddle fraction counts cells whose face neighborhood crosses the
    level; if perturbing the level by relative steps 2^-40 k (k <= 8)
    lowers it, the best perturbed level is used.
    """
    if isinstance(gs_or_G, GoodSetFields):
        G = gs_or_G.G.scalar()
        grid = gs_or_G.G
    else:
        G = gs_or_G.scalar()
        grid = gs_or_G
    if lam <= 0:
        raise GridError("level must be positive")

    def straddle_fraction(level: float, stride: int = 1) -> float:
        sub = G[tuple(slice(None, None, stride) for _ in range(G.ndim))]
        good = sub <= level
        boundary = np.zeros_like(good)
        for axis in range(good.ndim):
            a = [slice(None)] * good.ndim
            b = [slice(None)] * good.ndim
            a[axis] = slice(1, None)
            b[axis] = slice(None, -1)
            cross = good[tuple(a)] != good[tuple(b)]
            boundary[tuple(a)] |= cross
            boundary[tuple(b)] |= cross
        return float(boundary.sum()) / boundary.size

    best_lam, best_frac, best_k = lam, straddle_fraction(lam), 0
    for k in range(1, 9):
        cand = lam * (1.0 + 2.0**-40 * k)
        frac = straddle_fraction(cand)
        if frac < best_frac:
            best_lam, best_frac, best_k = cand, frac, k
    coarse = straddle_fraction(best_lam, stride=2)
    return {
        "lambda": best_lam,
        "perturbation_steps": best_k,
        "good_mask": G <= best_lam,
        "straddle_fraction": best_frac,
        "straddle_fraction_coarse": coarse,
        "shrinks_under_refinement": bool(best_frac <= coarse + 1e-12),
    }


# ---------------------------------------------------------------------------
# the truncation itself
# ---------------------------------------------------------------------------


def _fit_local_polys(
    v: GridFunction,
    pou: PartitionOfUnity,
    m: int,
) -> tuple[list, list, list]:
    """Weighted mean-value polynomial of v per Whitney ball.

    Fits against the normalized partition weight on the cells of the
    3/4-ball; returns (polys, cells_per_ball, psi_values_per_ball).
    """
    cov = pou.cover
    cells, psis, _den = pou.psi_grid(v)
    centers_flat = v.cell_centers().reshape(-1, v.n)
    sigma_list = multi_indices_upto(v.n, m - 1)
    dfields = {}
    for k in range(m):
        for sig in multi_indices(v.n, k):
            dfields[sig] = partial_derivative(v, sig).values.reshape(-1, v.components)
    polys = []
    for i in range(len(cov)):
        cc = cells[i]
        w = psis[i]
        if len(cc) == 0 or w.sum() <= 0:
            # degenerate: fall back to the raw bump cell set (center cell)
            polys.append(None)
            continue
        wsum = w.sum()
        pts = centers_flat[cc]
        rel = pts - cov.centers[i]
        deriv_avgs = {sig: (dfields[sig][cc] * w[:, None]).sum(axis=0) / wsum for sig in dfields}
        monomial_avgs = {mu: float((mi_power(rel, mu) * w).sum() / wsum) for mu in sigma_list}
        polys.append(
            fit_on_cells(pts, deriv_avgs, monomial_avgs, m, cov.centers[i], v.components)
        )
    return polys, cells, psis


def truncate(
    u: GridFunction,
    weight: Weight,
    cfg: ExponentConfig,
    derived: DerivedExponents,
    tc: TruncationConfig,
    data: dict | None = None,
    goodset: GoodSetFields | None = None,
) -> TruncationResult:
    """Full truncation pipeline at one level."""
    if goodset is None:
        goodset = assemble_g(u, weight, cfg, derived, tc, data=data)
    floor = lambda_floor(goodset, u, tc)
    lam0 = floor["lambda0"]
    lam = tc.lam if tc.lam is not None else tc.lambda_mult * lam0
    if lam <= lam0:
        raise GridError(f"level {lam} must exceed the floor {lam0}")
    ls = level_set(goodset, lam)
    good = ls["good_mask"]
    bad = ~good
    lam = ls["lambda"]

    B2 = ball(tc.center, 2.0 * tc.R)
    eta = smooth_cutoff(u, tc.center, tc.R, 2.0 * tc.R)
    P = fit(u, B2, eta, cfg.m, tc.center)
    pvals = P.evaluate(u.cell_centers().reshape(-1, u.n)).reshape(u.dims + (u.components,))
    v = u.with_values((u.values - pvals) * eta.scalar()[..., None])

    cov = cover(u, bad, R=tc.R)
    pou = partition_of_unity(cov, m=cfg.m)
    polys, cells, psis = _fit_local_polys(v, pou, cfg.m)

    vflat = v.values.reshape(-1, u.components)
    out = vflat.copy()
    centers_flat = u.cell_centers().reshape(-1, u.n)
    for i in range(len(cov)):
        if polys[i] is None:
            continue
        cc = cells[i]
        w = psis[i]
        out[cc] -= (vflat[cc] - polys[i].evaluate(centers_flat[cc])) * w[:, None]
    v_lambda = u.with_values(out.reshape(u.dims + (u.components,)))

    return TruncationResult(
        v=v,
        v_lambda=v_lambda,
        good_mask=good,
        bad_mask=bad,
        cover=cov,
        pou=pou,
        local_polys=polys,
        global_poly=P,
        lam=lam,
        lambda0=lam0,
        goodset=goodset,
        config=tc,
        cfg=cfg,
        derived=derived,
        weight=weight,
        eta=eta,
        ball_cells=cells,
        ball_psi=psis,
    )


# ---------------------------------------------------------------------------
# certified bounds
# ---------------------------------------------------------------------------


def derivative_bounds_report(res: TruncationResult) -> dict:
    """Measured constants of the two derivative bounds on the bad set.

    For every order pair k <= l:  |D^k v_lambda| <= c1 R^(l-k) lambda^(1/gamma_p,l)
    on the bad set, and a^(1/q) |D^k v_lambda| <= c2 R^(l-k) lambda^(1/gamma_q,l)
    on its intersection with the 2R-ball.
    """
    cfg, derived, tc = res.cfg, res.derived, res.config
    bad = res.bad_mask
    if not bad.any():
        return {"c1": {}, "c2": {}, "empty_bad_set": True}
    in2R = np.linalg.norm(res.v.cell_centers() - tc.center, axis=-1) < 2.0 * tc.R
    a_vals = res.weight.a.scalar()
    c1: dict = {}
    c2: dict = {}
    dnorm_cache = {k: derivative_norm(res.v_lambda, k).scalar() for k in range(cfg.m + 1)}
    for ell in range(cfg.m + 1):
        gp = derived.gamma["p"][ell]
        gq = derived.gamma["q"][ell]
        for k in range(ell + 1):
            dn = dnorm_cache[k]
            denom1 = tc.R ** (ell - k) * res.lam ** (1.0 / gp)
            c1[(ell, k)] = float(dn[bad].max()) / denom1
            sel = bad & in2R
            if sel.any():
                denom2 = tc.R ** (ell - k) * res.lam ** (1.0 / gq)
                c2[(ell, k)] = float((a_vals[sel] ** (1.0 / cfg.q) * dn[sel]).max()) / denom2
            else:
                c2[(ell, k)] = 0.0
    return {"c1": c1, "c2": c2, "empty_bad_set": False}


def oscillation_report(res: TruncationResult) -> dict:
    """Per-ball mean deviation of v from its local polynomial.

    avg_{3/4 B_i} |D^l v - D^l P_i| against r_i^(m-l) lambda^(1/p).
    """
    cfg = res.cfg
    cov = res.cover
    if len(cov) == 0:
        return {"max_ratio": {}, "balls": 0}
    centers_flat = res.v.cell_centers().reshape(-1, res.v.n)
    dfields = {
        sig: partial_derivative(res.v, sig).values.reshape(-1, res.v.components)
        for k in range(cfg.m + 1)
        for sig in multi_indices(res.v.n, k)
    }
    max_ratio = {ell: 0.0 for ell in range(cfg.m + 1)}
    for i in range(len(cov)):
        cc = res.ball_cells[i]
        if len(cc) == 0 or res.local_polys[i] is None:
            continue
        pts = centers_flat[cc]
        r_i = cov.radii[i]
        for ell in range(cfg.m + 1):
            sq = np.zeros(len(cc))
            for sig in multi_indices(res.v.n, ell):
                dP = res.local_polys[i].differentiate(sig).evaluate(pts) if ell < cfg.m else 0.0
                diff = dfields[sig][cc] - dP
                sq += np.sum(np.atleast_2d(diff) ** 2, axis=-1)
            lhs = float(np.sqrt(sq).mean())
            rhs = r_i ** (cfg.m - ell) * res.lam ** (1.0 / cfg.p)
            max_ratio[ell] = max(max_ratio[ell], lhs / rhs)
    return {"max_ratio": max_ratio, "balls": len(cov)}


def polynomial_transfer_report(res: TruncationResult, max_pairs: int = 400) -> dict:
    """Neighbor-polynomial transfer: sup |d_sigma P_j - d_sigma Q_i| over the
    3/4-ball against r_i^(l-k) T_{l,i}, T_{l,i} = sup_{j in A_i} avg_{B_j} |D^l v|."""
    cfg = res.cfg
    cov = res.cover
    if len(cov) == 0:
        return {"max_ratio": {}, "pairs": 0}
    centers_flat = res.v.cell_centers().reshape(-1, res.v.n)
    dist_all = centers_flat  # reused below per ball
    dnorm_v = {ell: derivative_norm(res.v, ell).scalar().reshape(-1) for ell in range(cfg.m + 1)}

    # mean |D^l v| over each full ball
    ball_means = np.zeros((len(cov), cfg.m + 1))
    for i in range(len(cov)):
        d = np.linalg.norm(centers_flat - cov.centers[i], axis=1)
        inside = d < cov.radii[i]
        if not inside.any():
            inside = d <= d.min() + 1e-12
        for ell in range(cfg.m + 1):
            ball_means[i, ell] = float(dnorm_v[ell][inside].mean())

    pairs = [(i, int(j)) for i in range(len(cov)) for j in cov.neighbors[i] if int(j) != i]
    stride = max(1, len(pairs) // max_pairs)
    max_ratio = {}
    exact = 0
    for i, j in pairs[::stride]:
        if res.local_polys[i] is None or res.local_polys[j] is None:
            continue
        cc = res.ball_cells[i]
        if len(cc) == 0:
            continue
        pts = centers_flat[cc]
        T = {ell: float(ball_means[list(cov.neighbors[i]), ell].max()) for ell in range(cfg.m + 1)}
        for sig in multi_indices_upto(res.v.n, cfg.m - 1):
            k = sum(sig)
            dPj = res.local_polys[j].differentiate(sig).evaluate(pts)
            dQi = res.local_polys[i].differentiate(sig).evaluate(pts)
            sup = float(np.abs(dPj - dQi).max())
            for ell in range(cfg.m + 1):
                denom = cov.radii[i] ** (ell - k) * T[ell]
                if denom > 0:
                    key = (ell, k)
                    ratio = sup / denom
                    max_ratio[key] = max(max_ratio.get(key, 0.0), ratio)
                elif sup == 0.0:
                    exact += 1
    return {"max_ratio": max_ratio, "pairs": len(pairs[::stride]), "exact_agreements": exact}


def admissibility_report(res: TruncationResult, center_stride: int = 4) -> dict:
    """Scaled mean oscillation of D^l v_lambda over a deterministic family of
    test balls (dyadic radii, strided lattice centers) against
    R^(m-l-1) lambda^(1/p)."""
    cfg, tc = res.cfg, res.config
    grid = res.v_lambda
    centers_flat = grid.cell_centers().reshape(-1, grid.n)
    in2R = np.linalg.norm(centers_flat - tc.center, axis=1) < 2.0 * tc.R
    idx_grid = np.indices(grid.dims).reshape(grid.n, -1).T
    on_stride = np.all(idx_grid % center_stride == 0, axis=1)
    test_centers = centers_flat[in2R & on_stride]
    radii = [tc.R * 2.0**-j for j in range(1, 7)]

    darrays = {
        ell: np.stack(
            [partial_derivative(grid, sig).values.reshape(-1, grid.components)
             for sig in multi_indices(grid.n, ell)],
            axis=1,
        )
        for ell in range(cfg.m)
    }
    max_ratio = {ell: 0.0 for ell in range(cfg.m)}
    for r in radii:
        if r < 2 * grid.spacing:
            continue
        for z in test_centers:
            inside = np.linalg.norm(centers_flat - z, axis=1) < r
            cnt = int(inside.sum())
            if cnt < 2:
                continue
            for ell in range(cfg.m):
                block = darrays[ell][inside]
                mean = block.mean(axis=0)
                lhs = float(np.sqrt(np.sum((block - mean) ** 2, axis=(1, 2))).mean()) / r
                rhs = tc.R ** (cfg.m - ell - 1) * res.lam ** (1.0 / cfg.p)
                max_ratio[ell] = max(max_ratio[ell], lhs / rhs)
    return {"max_ratio": max_ratio, "test_centers": len(test_centers), "radii": radii}
