"""Self-improvement machinery: layer-cake identities, the iteration lemma
with its explicit constant, exit-radius selection with greedy Vitali
thinning, and the reverse-Hoelder-to-higher-integrability step with the
full derived constant chain

    d = (1+kappa)/2,        theta = (1/(4A+1))^(1/d),
    c1 = 2 5^n A,           c2 = 2 5^n,
    c* = 4 c1 (4A+1)^(1+2 eps0),   eps_max = min((1-kappa)/c*, eps0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridError, GridFunction, Region, ball, mean_over

__all__ = [
    "GehringCertificate",
    "layer_cake_check",
    "iteration_constant",
    "iteration_lemma_check",
    "gehring_constants",
    "gehring_verify",
    "exit_radii",
]


@dataclass(frozen=True)
class GehringCertificate:
    n: int
    A: float
    kappa: float
    eps0: float
    theta_rh: float
    R0: float
    d: float
    theta_g: float
    c1: float
    c2: float
    c_star: float
    eps_max: float

    def as_dict(self) -> dict:
        return {
            "n": self.n, "A": self.A, "kappa": self.kappa, "eps0": self.eps0,
            "theta_rh": self.theta_rh, "R0": self.R0, "d": self.d,
            "theta_g": self.theta_g, "c1": self.c1, "c2": self.c2,
            "c_star": self.c_star, "eps_max": self.eps_max,
        }


def gehring_constants(
    n: int,
    A: float,
    kappa: float,
    eps0: float,
    theta_rh: float = 0.5,
    R0: float = 0.5,
) -> GehringCertificate:
    """Populate the certificate and verify the absorption inequality."""
    if not (0 < kappa < 1):
        raise GridError(f"kappa must lie in (0,1), got {kappa}")
    if A <= 0 or eps0 <= 0:
        raise GridError("A and eps0 must be positive")
    d = (1.0 + kappa) / 2.0
    theta_g = (1.0 / (4.0 * A + 1.0)) ** (1.0 / d)
    c1 = 2.0 * 5.0**n * A
    c2 = 2.0 * 5.0**n
    c_star = 4.0 * c1 * (4.0 * A + 1.0) ** (1.0 + 2.0 * eps0)
    eps_max = min((1.0 - kappa) / c_star, eps0)
    cert = GehringCertificate(
        n=n, A=A, kappa=kappa, eps0=eps0, theta_rh=theta_rh, R0=R0,
        d=d, theta_g=theta_g, c1=c1, c2=c2, c_star=c_star, eps_max=eps_max,
    )
    # absorption: A theta^d + 1/4 <= 1/2, exact since A theta^d = A/(4A+1)
    if A * theta_g**d + 0.25 > 0.5 + 1e-12:
        raise GridError("absorption inequality failed; certificate inconsistent")
    return cert


# ---------------------------------------------------------------------------
# layer cake and iteration lemma
# ---------------------------------------------------------------------------


def layer_cake_check(
    h: GridFunction,
    r: float,
    region: Region | None = None,
    nodes: int = 4000,
    sample_points: int = 64,
    refine_steps: int = 50,
) -> dict:
    """Compare h^r against the level-set integral representation.

    For r > 0:  h(x)^r = r int_0^inf mu^(r-1) chi_{h > mu} dmu;
    for r < 0 the complementary form on {h > 0}.  The level integral uses
    the exact antiderivative on intervals where the sampled indicator is
    constant and adaptively bisects the one interval where it flips, so the
    residual reflects only the remaining flip-interval width.
    """
    if r == 0:
        raise GridError("exponent must be nonzero")
    vals = h.scalar()
    mask = np.ones(h.dims, dtype=bool) if region is None else region.mask_for(h)
    sel = vals[mask]
    if r < 0:
        sel = sel[sel > 0]
    if sel.size == 0:
        raise GridError("no admissible sample points")
    stride = max(1, sel.size // sample_points)
    pts = np.sort(sel)[::stride]
    top = float(sel.max())
    mu = np.geomspace(top * 1e-8, top * (1 + 1e-9), nodes)

    def seg(a: float, b: float) -> float:
        # integral of |r| mu^(r-1) over [a, b]
        return abs(b**r - a**r) if a < b else 0.0

    worst = 0.0
    for x in pts:
        if r > 0:
            ind = x > mu
            # head below the node window where the indicator is certainly 1
            val = mu[0] ** r if ind[0] else 0.0
        else:
            ind = x <= mu
            # tail above the window where the complementary indicator is 1
            val = top**r if ind[-1] else 0.0
        flip = None
        for j in range(len(mu) - 1):
            if ind[j] and ind[j + 1]:
                val += seg(mu[j], mu[j + 1])
            elif ind[j] != ind[j + 1]:
                flip = (mu[j], mu[j + 1])
        if flip is not None:
            lo, hi = flip
            for _ in range(refine_steps):
                mid = 0.5 * (lo + hi)
                inside = (x > mid) if r > 0 else (x <= mid)
                # keep the half where the indicator still flips
                if inside == ((x > lo) if r > 0 else (x <= lo)):
                    lo = mid
                else:
                    hi = mid
            if r > 0:
                val += seg(flip[0], lo)
            else:
                val += seg(hi, flip[1])
        target = x**r
        worst = max(worst, abs(val - target) / abs(target))
    return {"residual": worst, "points": len(pts)}


def iteration_constant(tau: float, gamma: float, tol: float = 1e-12) -> float:
    """c(tau, gamma) = sum_i tau^i ((i+1)(i+2))^gamma, summed until the
    geometric tail bound drops below tolerance."""
    if not (0 <= tau < 1):
        raise GridError(f"tau must lie in [0,1), got {tau}")
    if gamma < 0:
        raise GridError("gamma must be >= 0")
    total = 0.0
    i = 0
    while True:
        term = tau**i * ((i + 1.0) * (i + 2.0)) ** gamma
        total += term
        # ((i+2)(i+3))^g / ((i+1)(i+2))^g <= ((i+3)/(i+1))^g -> 1, so for
        # large i the tail is dominated by a geometric series with ratio
        # tau * ((i+3)/(i+1))^g once that ratio is < 1
        ratio = tau * ((i + 3.0) / (i + 1.0)) ** gamma
        if ratio < 1.0 and term * ratio / (1.0 - ratio) < tol:
            break
        i += 1
        if i > 10_000_000:
            raise GridError("iteration constant did not converge")
    return total


def iteration_lemma_check(
    h_values: np.ndarray,
    radii: np.ndarray,
    tau: float,
    C1: float,
    C2: float,
    gamma: float,
    pair_samples: int = 200,
) -> dict:
    """Verify premise and conclusion of the hole-filling iteration lemma.

    ``h_values`` samples a nonnegative bounded function on the increasing
    radii grid; the premise h(s) <= tau h(t) + C1 + C2/(t-s)^gamma is
    checked on sampled pairs s < t, and the conclusion
    h(R0) <= C1/(1-tau) + c(tau,gamma) C2/(R1-R0)^gamma is then asserted.
    """
    radii = np.asarray(radii, dtype=float)
    h_values = np.asarray(h_values, dtype=float)
    if np.any(h_values < 0):
        raise GridError("h must be nonnegative")
    k = len(radii)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    stride = max(1, len(pairs) // pair_samples)
    violations = []
    for i, j in pairs[::stride]:
        bound = tau * h_values[j] + C1 + C2 / (radii[j] - radii[i]) ** gamma
        if h_values[i] > bound * (1 + 1e-12):
            violations.append((float(radii[i]), float(radii[j]), float(h_values[i] - bound)))
    if violations:
        return {"premise_ok": False, "violations": violations[:10], "conclusion_ok": None}
    c = iteration_constant(tau, gamma)
    rhs = C1 / (1.0 - tau) + c * C2 / (radii[-1] - radii[0]) ** gamma
    ok = h_values[0] <= rhs * (1 + 1e-12)
    return {
        "premise_ok": True,
        "conclusion_ok": bool(ok),
        "h_R0": float(h_values[0]),
        "bound": float(rhs),
        "iteration_c": c,
    }


# ---------------------------------------------------------------------------
# exit radii and Vitali thinning
# ---------------------------------------------------------------------------


def _local_window(f: GridFunction, x: np.ndarray, rho: float):
    """Distances and values of the cells within rho (plus one cell) of x."""
    h = f.spacing
    lo_idx = np.maximum(np.floor((x - rho - h - f.origin) / h - 0.5).astype(int), 0)
    hi_idx = np.minimum(np.ceil((x + rho + h - f.origin) / h - 0.5).astype(int) + 1, f.dims)
    slc = tuple(slice(lo_idx[a], hi_idx[a]) for a in range(f.n))
    centers = f.cell_centers()[slc].reshape(-1, f.n)
    vals = f.scalar()[slc].reshape(-1)
    return np.linalg.norm(centers - x, axis=1), vals


def _smoothed_average(dists: np.ndarray, vals: np.ndarray, h: float, rho: float) -> float:
    """Ball average continuous in the radius: cells enter with a hat weight
    over one cell width across the boundary."""
    w = np.clip((rho - dists) / h + 0.5, 0.0, 1.0)
    tw = float(w.sum())
    if tw <= 0:
        return 0.0
    return float((vals * w).sum() / tw)


def exit_radii(
    f: GridFunction,
    lam: float,
    r1: float,
    r2: float,
    center,
    sample_stride: int = 4,
    max_points: int = 400,
    outer_radius: float | None = None,
) -> dict:
    """Largest radius where the running ball average exits the level.

    For sampled points of the super-level set {f > lambda} inside the
    r1-ball, bisect the smoothed radius-average for its last crossing of
    lambda below (r2-r1)/15, then thin greedily so that the tripled balls
    are pairwise disjoint.  The level floor uses the integral over the
    ``outer_radius`` ball (default r2).
    """
    center = np.asarray(center, dtype=float)
    rho_max = (r2 - r1) / 15.0
    vol = math.pi ** (f.n / 2) / math.gamma(f.n / 2 + 1)
    outer = r2 if outer_radius is None else float(outer_radius)
    lam_floor = 15.0**f.n / (vol * (r2 - r1) ** f.n) * float(
        np.sum(f.scalar()[ball(center, outer).mask_for(f)]) * f.cell_volume
    )
    if lam <= lam_floor:
        raise GridError(f"level {lam} must exceed the floor {lam_floor}")

    centers = f.cell_centers().reshape(-1, f.n)
    vals = f.scalar().reshape(-1)
    inside = np.linalg.norm(centers - center, axis=1) < r1
    idx = np.flatnonzero(inside & (vals > lam))
    idx = idx[::sample_stride][:max_points]
    found = []
    for i in idx:
        x = centers[i]
        dists, wvals = _local_window(f, x, rho_max)
        lo, hi = 0.25 * f.spacing, rho_max * (1 - 1e-9)
        if _smoothed_average(dists, wvals, f.spacing, hi) >= lam:
            continue  # no exit below the ceiling; excluded by the floor bound
        if _smoothed_average(dists, wvals, f.spacing, lo) <= lam:
            continue  # smoothing already dips below at cell scale
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _smoothed_average(dists, wvals, f.spacing, mid) > lam:
                lo = mid
            else:
                hi = mid
        found.append((i, x, 0.5 * (lo + hi)))

    # greedy Vitali: descending exit radius, tripled balls disjoint
    found.sort(key=lambda t: (-t[2], t[0]))
    kept = []
    for i, x, rho in found:
        ok = all(np.linalg.norm(x - y) >= 3.0 * (rho + rho_k) for _, y, rho_k in kept)
        if ok:
            kept.append((i, x, rho))
    return {
        "lambda_floor": lam_floor,
        "candidates": len(found),
        "selected": [
            {"center": [float(c) for c in x], "rho": float(rho)} for _, x, rho in kept
        ],
        "all_rho": {int(i): float(rho) for i, x, rho in found},
    }


# ---------------------------------------------------------------------------
# the self-improvement scan
# ---------------------------------------------------------------------------


def _ball_pair_family(
    grid: GridFunction, omega: Region | None, R0: float, stride: int = 8, levels: int = 3
):
    """Concentric (B_R, B_3R) pairs: strided lattice centers, dyadic radii.

    The family (and its ordering) matches the energy-scan family, so a
    constant measured by a scan transfers verbatim to the premise here.
    """
    omask = np.ones(grid.dims, dtype=bool) if omega is None else omega.mask_for(grid)
    centers = grid.cell_centers()
    lo, hi = grid.box_lo, grid.box_hi
    idx = np.indices(grid.dims).reshape(grid.n, -1).T
    on_stride = np.all(idx % stride == 0, axis=1)
    cand = centers.reshape(-1, grid.n)[on_stride & omask.reshape(-1)]
    pairs = []
    R = R0
    for _ in range(levels):
        if R < 4 * grid.spacing:
            break
        for c in cand:
            if np.all(c - 3 * R >= lo) and np.all(c + 3 * R <= hi):
                if omega is None or _ball_inside(omega, c, 3 * R):
                    pairs.append((c, R))
        R /= 2.0
    return pairs


def _ball_inside(omega: Region, c: np.ndarray, r: float) -> bool:
    if omega.kind == "ball":
        return bool(np.linalg.norm(c - omega.center) + r <= omega.radius + 1e-12)
    if omega.kind == "box":
        return bool(np.all(c - r >= omega.lo) and np.all(c + r <= omega.hi))
    return True  # mask regions: rely on the box clamp above


def gehring_verify(
    f1: GridFunction,
    f2: GridFunction,
    cert: GehringCertificate,
    omega: Region | None = None,
    eps: float | None = None,
    mode: str = "all",
    stride: int = 8,
    levels: int = 3,
) -> dict:
    """Scan concentric ball pairs: premise with the supplied constants, then
    the improved-integrability conclusion with measured constants.

    ``mode="all"`` demands the reverse-Hoelder premise (with the theta tail
    term) on every scanned pair; ``mode="conditional"`` demands it (without
    the tail term) only on pairs where the large-ball average does not
    exceed the small-ball average.
    """
    if mode not in ("all", "conditional"):
        raise GridError(f"unknown premise mode {mode!r}")
    if np.any(f1.scalar() < 0) or np.any(f2.scalar() < 0):
        raise GridError("inputs must be nonnegative")
    eps_val = cert.eps_max if eps is None else float(eps)
    outside_certificate = eps_val > cert.eps_max * (1 + 1e-12)
    pairs = _ball_pair_family(f1, omega, cert.R0, stride=stride, levels=levels)
    if not pairs:
        raise GridError("no admissible ball pairs: domain too small for R0")
    records = []
    premise_fail = 0
    concl_c = 0.0
    A_required_max = 0.0
    for c, R in pairs:
        BR = ball(c, R)
        B3R = ball(c, 3 * R)
        a1 = float(mean_over(f1, BR)[0])
        a3 = float(mean_over(f1, B3R)[0])
        a3k = float(mean_over(f1, B3R, power=cert.kappa)[0]) ** (1.0 / cert.kappa)
        g3 = float(mean_over(f2, B3R)[0])
        if mode == "conditional":
            applicable = a3 <= a1 + 1e-15
            lhs_req = a1 - g3
        else:
            applicable = True
            lhs_req = a1 - g3 - cert.theta_rh * a3
        if applicable and a3k > 0:
            A_req = max(0.0, lhs_req) / a3k
        elif applicable:
            A_req = 0.0 if lhs_req <= 0 else math.inf
        else:
            A_req = 0.0
        premise_ok = (not applicable) or (A_req <= cert.A * (1 + 1e-9))
        if not premise_ok:
            premise_fail += 1
        A_required_max = max(A_required_max, A_req if applicable else 0.0)

        lhs_c = float(mean_over(f1, BR, power=1.0 + eps_val)[0]) ** (1.0 / (1.0 + eps_val))
        rhs_c = a3 + float(mean_over(f2, B3R, power=1.0 + eps_val)[0]) ** (1.0 / (1.0 + eps_val))
        c_meas = lhs_c / rhs_c if rhs_c > 0 else (0.0 if lhs_c == 0 else math.inf)
        if premise_ok and applicable:
            concl_c = max(concl_c, c_meas)
        records.append(
            {
                "center": [float(x) for x in c],
                "R": float(R),
                "premise_applicable": bool(applicable),
                "premise_ok": bool(premise_ok),
                "A_required": A_req,
                "conclusion_constant": c_meas,
            }
        )
    return {
        "pairs": len(pairs),
        "premise_failures": premise_fail,
        "premise_pass_fraction": 1.0 - premise_fail / len(pairs),
        "A_required_max": A_required_max,
        "conclusion_constant": concl_c,
        "eps": eps_val,
        "outside_certificate": bool(outside_certificate),
        "mode": mode,
        "records": records,
    }
