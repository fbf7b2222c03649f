"""End-to-end pipeline: system residuals, structure checks, per-ball energy
and reverse-Hoelder scans, and the chained self-improvement certificate.

The scans walk a deterministic family of concentric ball pairs, fit one
weighted mean-value polynomial per ball against a smooth cutoff, compare
the localized top-order energy with the lower-order and data terms, and
package the resulting averages directly as the premise of the
self-improvement step, so the final certificate is auditable from one
report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exponents import DerivedExponents, ExponentConfig, derive, validate, validation_passes
from .gehring import gehring_constants, gehring_verify
from .grid import (
    GridError,
    GridFunction,
    Region,
    ball,
    derivative_norm,
    multi_indices,
    partial_derivative,
)
from .meanpoly import fit
from .truncation import global_majorant, smooth_cutoff
from .weights import Weight, double_phase_field

__all__ = [
    "delta_hat",
    "scan_delta",
    "model_residual",
    "structure_checks",
    "BallScan",
    "caccioppoli_scan",
    "reverse_holder_scan",
    "self_improve",
]


# ---------------------------------------------------------------------------
# exponent helpers for the scans
# ---------------------------------------------------------------------------


def delta_hat(n: int, p: float, q: float, alpha: float) -> float:
    """The sub-unit energy exponent from the lower-order estimate.

    Case split on the duals-below-one:
      p_* = max(1, np/(n+p)), q_* = max(1, nq/(n+q));
      p_* > 1            -> (p_*, q_*)
      q_* > 1 = p_*      -> (min((1+p)/2, q_*), q_*)
      q_* = 1            -> ((1+p)/2, min((1+q)/2, (1+alpha/(nq)) (1+p)/2))
    and delta_hat = max(phat/p, qhat/q).
    """
    p_star = max(1.0, n * p / (n + p))
    q_star = max(1.0, n * q / (n + q))
    if p_star > 1.0:
        phat, qhat = p_star, q_star
    elif q_star > 1.0:
        phat, qhat = min((1.0 + p) / 2.0, q_star), q_star
    else:
        phat = (1.0 + p) / 2.0
        qhat = min((1.0 + q) / 2.0, (1.0 + alpha / (n * q)) * (1.0 + p) / 2.0)
    return max(phat / p, qhat / q)


def scan_delta(delta0: float) -> float:
    """Default energy exponent: 90% of the way from (1+delta0)/2 to 1."""
    d1 = (1.0 + delta0) / 2.0
    return d1 + 0.9 * (1.0 - d1)


# ---------------------------------------------------------------------------
# model system
# ---------------------------------------------------------------------------


def model_flux(u: GridFunction, weight: Weight, p: float, q: float, m: int = 1) -> dict:
    """Top-order flux of the model system: (|D^m u|^(p-2) + a |D^m u|^(q-2)) d_sigma u."""
    dnorm = derivative_norm(u, m).scalar()
    a_vals = weight.a.scalar()
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dnorm > 0, dnorm ** (p - 2.0) + a_vals * dnorm ** (q - 2.0), 0.0)
    flux = {}
    for sig in multi_indices(u.n, m):
        flux[sig] = partial_derivative(u, sig).values * w[..., None]
    return flux


def model_residual(
    u: GridFunction,
    weight: Weight,
    p: float,
    q: float,
    phi: GridFunction,
    m: int = 1,
    margin_cells: int = 2,
) -> float:
    """Quadrature of the weak form against a compactly supported test field."""
    if not u.same_lattice(phi):
        raise GridError("test function must share the lattice")
    border = np.zeros(u.dims, dtype=bool)
    for axis in range(u.n):
        sl = [slice(None)] * u.n
        sl[axis] = slice(0, margin_cells)
        border[tuple(sl)] = True
        sl[axis] = slice(-margin_cells, None)
        border[tuple(sl)] = True
    if np.any(phi.values[border] != 0.0):
        raise GridError("test function must vanish on the boundary margin")
    flux = model_flux(u, weight, p, q, m)
    total = 0.0
    for sig, fl in flux.items():
        dphi = partial_derivative(phi, sig).values
        total += float(np.sum(fl * dphi)) * u.cell_volume
    return total


def structure_checks(
    weight: Weight,
    p: float,
    q: float,
    nu: float = 1.0,
    m: int = 1,
    n: int = 2,
    components: int = 1,
    count: int = 10_000,
    seed: int = 0x5EED,
) -> dict:
    """Coercivity and growth of the model field on random state samples."""
    rng = np.random.default_rng(seed)
    sigmas = multi_indices(n, m)
    k = len(sigmas) * components
    xi = rng.normal(size=(count, k))
    a_flat = weight.a.scalar().reshape(-1)
    a_s = a_flat[rng.integers(0, len(a_flat), size=count)]
    norm = np.linalg.norm(xi, axis=1)
    wgt = np.where(norm > 0, norm ** (p - 2.0) + a_s * norm ** (q - 2.0), 0.0)
    pairing = wgt * norm**2  # sum_sigma A_sigma . xi_sigma
    target = norm**p + a_s * norm**q
    coercivity_residual = float(np.abs(pairing / nu - target).max()) if count else 0.0
    coercivity_ok = bool(np.all(pairing / nu >= target * (1 - 1e-12) - 1e-300))
    # growth: |A_sigma| = wgt |xi_sigma| <= |xi|^(p-1) + a^(1/q) a^((q-1)/q) |xi|^(q-1)
    amax = np.abs(xi).max(axis=1)
    lhs = wgt * amax
    rhs = norm ** (p - 1.0) + a_s * norm ** (q - 1.0)
    growth_ok = bool(np.all(lhs <= rhs * (1 + 1e-12) + 1e-300))
    return {
        "coercivity_ok": coercivity_ok,
        "coercivity_residual": coercivity_residual,
        "growth_ok": growth_ok,
        "samples": count,
    }


# ---------------------------------------------------------------------------
# per-ball scans
# ---------------------------------------------------------------------------


@dataclass
class BallScan:
    center: np.ndarray
    R: float
    lhs: float
    terms: dict
    constant: float


def _scan_family(grid: GridFunction, omega: Region, R0: float, stride: int = 8, levels: int = 3):
    omask = omega.mask_for(grid)
    centers = grid.cell_centers()
    lo, hi = grid.box_lo, grid.box_hi
    idx = np.indices(grid.dims).reshape(grid.n, -1).T
    on_stride = np.all(idx % stride == 0, axis=1)
    cand = centers.reshape(-1, grid.n)[on_stride & omask.reshape(-1)]
    out = []
    R = R0
    for _ in range(levels):
        if R < 4 * grid.spacing:
            break
        for c in cand:
            if np.all(c - 3 * R >= lo) and np.all(c + 3 * R <= hi) and _inside(omega, c, 3 * R):
                out.append((c, R))
        R /= 2.0
    return out


def _inside(omega: Region, c: np.ndarray, r: float) -> bool:
    if omega.kind == "ball":
        return bool(np.linalg.norm(c - omega.center) + r <= omega.radius + 1e-12)
    if omega.kind == "box":
        return bool(np.all(c - r >= omega.lo) and np.all(c + r <= omega.hi))
    return True


def _poly_deficit_fields(u, P, cfg):
    """|D^l u - D^l P| per order l < m, as flat arrays."""
    centers = u.cell_centers().reshape(-1, u.n)
    out = {}
    for ell in range(cfg.m):
        sq = np.zeros(len(centers))
        for sig in multi_indices(u.n, ell):
            diff = partial_derivative(u, sig).values.reshape(-1, u.components) - P.differentiate(
                sig
            ).evaluate(centers)
            sq += np.sum(diff**2, axis=1)
        out[ell] = np.sqrt(sq)
    return out


def caccioppoli_scan(
    u: GridFunction,
    weight: Weight,
    cfg: ExponentConfig,
    derived: DerivedExponents,
    omega: Region,
    data: dict | None = None,
    R0: float | None = None,
    delta: float | None = None,
    stride: int = 8,
) -> dict:
    """Per-ball energy comparison.

    LHS = avg_{B_R} H_m^delta against
    (1/2) avg_{B_3R} H_m^delta
    + c sum_l avg_{B_2R} H_m(x, (D^l u - D^l P)/R^(m-l))^delta
    + c avg_{B_3R} F^delta,
    with P the eta-weighted mean-value polynomial on B_2R.  Also verifies
    the lower-order control: the unpowered middle sum against
    (avg_{B_2R} H_m^delta_hat)^(1/delta_hat).
    """
    d0 = derived.delta0
    delta = scan_delta(d0) if delta is None else float(delta)
    dhat = delta_hat(cfg.n, cfg.p, cfg.q, cfg.alpha)
    R0 = derived.R0 if R0 is None else float(R0)
    family = _scan_family(u, omega, R0, stride=stride)
    if not family:
        raise GridError("empty ball family: domain too small for the scan radius")

    F = global_majorant(u, weight, cfg, derived, data=data, omega_mask=omega.mask_for(u))
    Hm = double_phase_field(derivative_norm(u, cfg.m), weight, derived, cfg.q, cfg.m)
    a_vals = weight.a.scalar().reshape(-1)
    Hm_flat = Hm.scalar().reshape(-1)
    F_flat = F.scalar().reshape(-1)
    centers_flat = u.cell_centers().reshape(-1, u.n)

    balls = []
    mid_control = 0.0
    for c, R in family:
        eta = smooth_cutoff(u, c, R, 2.0 * R)
        P = fit(u, ball(c, 2.0 * R), eta, cfg.m, c)
        deficits = _poly_deficit_fields(u, P, cfg)
        d = np.linalg.norm(centers_flat - c, axis=1)
        in1 = d < R
        in2 = d < 2 * R
        in3 = d < 3 * R
        lhs = float((Hm_flat[in1] ** delta).mean())
        t_half = 0.5 * float((Hm_flat[in3] ** delta).mean())
        mid = 0.0
        mid_unpow = 0.0
        for ell in range(cfg.m):
            z = deficits[ell][in2] / R ** (cfg.m - ell)
            hm_of = z**cfg.p + a_vals[in2] * z**cfg.q
            mid += float((hm_of**delta).mean())
            mid_unpow += float(hm_of.mean())
        t_F = float((F_flat[in3] ** delta).mean())
        denom = mid + t_F
        const = max(0.0, lhs - t_half) / denom if denom > 0 else 0.0
        balls.append(BallScan(center=c, R=R, lhs=lhs,
                              terms={"half": t_half, "mid": mid, "F": t_F}, constant=const))
        rhs_ctrl = float((Hm_flat[in2] ** dhat).mean()) ** (1.0 / dhat)
        if rhs_ctrl > 0:
            mid_control = max(mid_control, mid_unpow / rhs_ctrl)
    return {
        "balls": balls,
        "constant": max(b.constant for b in balls),
        "mid_control_constant": mid_control,
        "delta": delta,
        "delta_hat": dhat,
        "count": len(balls),
    }


def reverse_holder_scan(
    u: GridFunction,
    weight: Weight,
    cfg: ExponentConfig,
    derived: DerivedExponents,
    omega: Region,
    data: dict | None = None,
    R0: float | None = None,
    delta: float | None = None,
    stride: int = 8,
) -> dict:
    """Per-ball reverse-Hoelder decomposition, packaged for self-improvement.

    avg_{B_R} H_m^delta <= c (avg_{B_3R} H_m^delta_hat)^(delta/delta_hat)
    + c avg_{B_3R} F^delta + (1/2) avg_{B_3R} H_m^delta.
    The return value carries f1 = H_m^delta, f2 = F^delta, kappa =
    delta_hat/delta and the tail coefficient 1/2.
    """
    d0 = derived.delta0
    delta = scan_delta(d0) if delta is None else float(delta)
    dhat = delta_hat(cfg.n, cfg.p, cfg.q, cfg.alpha)
    R0 = derived.R0 if R0 is None else float(R0)
    family = _scan_family(u, omega, R0, stride=stride)
    if not family:
        raise GridError("empty ball family: domain too small for the scan radius")

    F = global_majorant(u, weight, cfg, derived, data=data, omega_mask=omega.mask_for(u))
    Hm = double_phase_field(derivative_norm(u, cfg.m), weight, derived, cfg.q, cfg.m)
    Hm_flat = Hm.scalar().reshape(-1)
    F_flat = F.scalar().reshape(-1)
    centers_flat = u.cell_centers().reshape(-1, u.n)

    balls = []
    for c, R in family:
        d = np.linalg.norm(centers_flat - c, axis=1)
        in1 = d < R
        in3 = d < 3 * R
        lhs = float((Hm_flat[in1] ** delta).mean())
        low = float((Hm_flat[in3] ** dhat).mean()) ** (delta / dhat)
        t_F = float((F_flat[in3] ** delta).mean())
        t_half = 0.5 * float((Hm_flat[in3] ** delta).mean())
        denom = low + t_F
        const = max(0.0, lhs - t_half) / denom if denom > 0 else 0.0
        balls.append(BallScan(center=c, R=R, lhs=lhs,
                              terms={"low": low, "F": t_F, "half": t_half}, constant=const))
    kappa = dhat / delta
    return {
        "balls": balls,
        "constant": max(b.constant for b in balls),
        "kappa": kappa,
        "theta_rh": 0.5,
        "delta": delta,
        "delta_hat": dhat,
        "f1": Hm.with_values((Hm_flat**delta).reshape(u.dims)[..., None]),
        "f2": F.with_values((F_flat**delta).reshape(u.dims)[..., None]),
        "count": len(balls),
    }


def self_improve(
    u: GridFunction,
    weight: Weight,
    cfg: ExponentConfig,
    omega: Region,
    data: dict | None = None,
    derived: DerivedExponents | None = None,
    R0: float | None = None,
    stride: int = 8,
    kappa_override: float | None = None,
) -> dict:
    """Full chain: validate, derive exponents, scans, certificate, verify.

    The measured reverse-Hoelder constant becomes the premise constant A,
    kappa = delta_hat/delta, eps0 = 1/delta0 - 1 (or 1/delta - 1 in the
    unit-target mode), and the improved-integrability inequality is then
    verified at eps_max over the same ball family.
    """
    stages: dict = {}
    checks = validate(cfg)
    stages["validate"] = {"pass": validation_passes(checks),
                          "failed": [c.name for c in checks if not c.ok]}
    if not stages["validate"]["pass"]:
        return {"stages": stages, "status": "fail", "failed_stage": "validate"}
    if derived is None:
        derived = derive(cfg)
    stages["exponents"] = derived.as_dict()

    cacc = caccioppoli_scan(u, weight, cfg, derived, omega, data=data, R0=R0, stride=stride)
    stages["caccioppoli"] = {
        "constant": cacc["constant"],
        "mid_control_constant": cacc["mid_control_constant"],
        "count": cacc["count"],
    }
    rh = reverse_holder_scan(u, weight, cfg, derived, omega, data=data, R0=R0, stride=stride)
    stages["reverse_holder"] = {"constant": rh["constant"], "kappa": rh["kappa"], "count": rh["count"]}

    A = max(rh["constant"], 1e-6)
    kappa = rh["kappa"] if kappa_override is None else float(kappa_override)
    if cfg.beta_src == 1.0:
        eps0 = 1.0 / rh["delta"] - 1.0
        mode = "corollary"
    else:
        eps0 = 1.0 / derived.delta0 - 1.0
        mode = "theorem"
    R0_eff = derived.R0 if R0 is None else float(R0)
    cert = gehring_constants(cfg.n, A, kappa, eps0, theta_rh=rh["theta_rh"], R0=R0_eff)
    stages["certificate"] = cert.as_dict()

    f2_scaled = rh["f2"].with_values(A * rh["f2"].values)
    verify = gehring_verify(rh["f1"], f2_scaled, cert, omega=omega, stride=stride)
    stages["gehring_verify"] = {
        k: verify[k]
        for k in ("pairs", "premise_failures", "premise_pass_fraction", "conclusion_constant", "eps")
    }
    ok = verify["premise_failures"] == 0 and math.isfinite(verify["conclusion_constant"])
    stages["improvement"] = {
        "eps_max": cert.eps_max,
        "improved_exponent": 1.0 + cert.eps_max,
        "mode": mode,
        "target_integrability": 1.0 if mode == "corollary" else (1.0 + cert.eps_max) * rh["delta"],
    }
    status = "pass" if ok and cert.eps_max > 0 else "fail"
    failed = None if status == "pass" else "gehring_verify"
    return {"stages": stages, "status": status, "failed_stage": failed}
