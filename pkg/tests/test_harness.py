"""End-to-end pipeline: residuals, structure checks, scans, self-improvement."""

import math

import numpy as np
import pytest

from dptool import grid as g
from dptool import exponents as ex
from dptool import harness as hn
from dptool.weights import Weight


@pytest.fixture(scope="module")
def model2d(weight64_mod):
    b = g.box([-0.5, -0.5], [0.5, 0.5])
    u = g.create_grid(b, 64, lambda p: np.sin(4 * p[:, 0]) * np.cos(3 * p[:, 1]) + 0.3 * p[:, 0] ** 2)
    cfg = ex.ExponentConfig(n=2, m=1, N=1, p=2.0, q=2.2, alpha=0.5)
    return u, weight64_mod, cfg


@pytest.fixture(scope="module")
def weight64_mod():
    from dptool.weights import estimate_seminorm, regularize
    b = g.box([-0.5, -0.5], [0.5, 0.5])
    a = g.create_grid(b, 64, lambda p: np.linalg.norm(p, axis=1) ** 0.5)
    at = regularize(a, 0.5, diverging=False)
    est, _ = estimate_seminorm(at, 0.5)
    return Weight(a=at, alpha=0.5, seminorm_estimate=max(1.0, est))


def bump_test_function(u, radius=0.3):
    x = u.cell_centers()
    vals = np.prod(np.maximum(radius - np.abs(x), 0.0) ** 2, axis=-1)
    return u.with_values(vals[..., None])


class TestModelResidual:
    def test_linear_flux_divergence_free(self):
        b = g.box([-0.5, -0.5], [0.5, 0.5])
        u = g.create_grid(b, 64, lambda p: 2 * p[:, 0] - p[:, 1])
        a = g.create_grid(b, 64, lambda p: np.full(len(p), 0.7))
        w = Weight(a=a, alpha=0.5, seminorm_estimate=1.0)
        phi = bump_test_function(u)
        r = hn.model_residual(u, w, 2.0, 2.2, phi)
        phi_norm = float(np.abs(phi.values).max())
        assert abs(r) <= 1e-8 * phi_norm

    def test_harmonic_residual_second_order(self):
        b = g.box([-0.5, -0.5], [0.5, 0.5])
        vals = []
        for size in (48, 96):
            u = g.create_grid(b, size, lambda p: p[:, 0] ** 2 - p[:, 1] ** 2)
            a = g.create_grid(b, size, lambda p: np.zeros(len(p)))
            w = Weight(a=a, alpha=0.5, seminorm_estimate=1.0)
            # an oscillatory test function keeps the discrete residual nonzero
            x = u.cell_centers()
            phi_vals = np.prod(np.maximum(0.3 - np.abs(x), 0.0) ** 2, axis=-1) * np.sin(7 * x[..., 0])
            phi = u.with_values(phi_vals[..., None])
            vals.append(abs(hn.model_residual(u, w, 2.0, 2.0, phi)))
        if vals[1] > 1e-14:
            assert vals[0] / vals[1] > 2.0

    def test_kink_negative_control(self):
        b = g.box([-0.5, -0.5], [0.5, 0.5])
        u = g.create_grid(b, 64, lambda p: np.abs(p[:, 0]))
        a = g.create_grid(b, 64, lambda p: np.zeros(len(p)))
        w = Weight(a=a, alpha=0.5, seminorm_estimate=1.0)
        phi = bump_test_function(u)
        r = hn.model_residual(u, w, 2.0, 2.0, phi)
        assert abs(r) > 1e-4

    def test_linear_in_test_function(self, model2d):
        u, w, cfg = model2d
        phi = bump_test_function(u)
        r1 = hn.model_residual(u, w, 2.0, 2.2, phi)
        r2 = hn.model_residual(u, w, 2.0, 2.2, phi.with_values(2 * phi.values))
        assert r2 == pytest.approx(2 * r1, rel=1e-12)

    def test_support_margin_enforced(self, model2d):
        u, w, cfg = model2d
        phi = u.with_values(np.ones(u.dims)[..., None])
        with pytest.raises(g.GridError, match="margin"):
            hn.model_residual(u, w, 2.0, 2.2, phi)


class TestStructure:
    def test_model_field(self, weight64_mod):
        out = hn.structure_checks(weight64_mod, 2.0, 2.2)
        assert out["coercivity_ok"] and out["growth_ok"]
        assert out["coercivity_residual"] < 1e-10

    def test_zero_state(self, weight64_mod):
        out = hn.structure_checks(weight64_mod, 2.0, 2.2, count=1)
        assert out["coercivity_ok"]


class TestDeltaHat:
    def test_model_case(self):
        # q_* > 1 = p_* branch: (min((1+p)/2, q_*), q_*)
        got = hn.delta_hat(2, 2.0, 2.2, 0.5)
        q_star = 2 * 2.2 / 4.2
        assert got == pytest.approx(max(q_star / 2.0, q_star / 2.2), rel=1e-14)

    def test_supercritical_branch(self):
        # both duals above one
        got = hn.delta_hat(3, 3.0, 3.3, 0.5)
        p_star, q_star = 3 * 3 / 6, 3 * 3.3 / 6.3
        assert got == pytest.approx(max(p_star / 3.0, q_star / 3.3), rel=1e-14)

    def test_small_exponent_branch(self):
        # q_* = 1: both hatted exponents synthesized
        got = hn.delta_hat(2, 1.2, 1.3, 0.5)
        phat = (1 + 1.2) / 2
        qhat = min((1 + 1.3) / 2, (1 + 0.5 / (2 * 1.3)) * phat)
        assert got == pytest.approx(max(phat / 1.2, qhat / 1.3), rel=1e-14)

    def test_below_one(self):
        for args in ((2, 2.0, 2.2, 0.5), (2, 1.2, 1.3, 0.5), (3, 3.0, 3.3, 0.5)):
            assert 0 < hn.delta_hat(*args) < 1


class TestScans:
    def test_zero_solution_trivial(self, weight64_mod):
        b = g.box([-0.5, -0.5], [0.5, 0.5])
        u = g.create_grid(b, 64, lambda p: np.zeros(len(p)))
        cfg = ex.ExponentConfig(n=2, m=1, N=1, p=2.0, q=2.2, alpha=0.5)
        der = ex.derive(cfg)
        out = hn.caccioppoli_scan(u, weight64_mod, cfg, der, g.ball([0.0, 0.0], 0.48), R0=0.1)
        assert all(b_.lhs == 0.0 for b_ in out["balls"])
        assert out["constant"] == 0.0

    def test_polynomial_top_energy_vanishes(self, weight64_mod):
        # degree m-1 input at m=2: the top derivative vanishes and the fitted
        # polynomial reproduces u, so both the energy and the deficits are 0
        b = g.box([-0.5, -0.5], [0.5, 0.5])
        u = g.create_grid(b, 64, lambda p: 1.0 + 2 * p[:, 0] - p[:, 1])
        cfg = ex.ExponentConfig(n=2, m=2, N=1, p=2.0, q=2.2, alpha=0.5)
        der = ex.derive(cfg)
        out = hn.caccioppoli_scan(u, weight64_mod, cfg, der, g.ball([0.0, 0.0], 0.48), R0=0.1)
        for b_ in out["balls"]:
            assert b_.lhs < 1e-18
            assert b_.terms["mid"] < 1e-18

    def test_scan_constants_refinement_stable(self):
        consts = []
        for size in (64, 128):
            b = g.box([-0.5, -0.5], [0.5, 0.5])
            u = g.create_grid(b, size, lambda p: np.sin(4 * p[:, 0]) * np.cos(3 * p[:, 1]))
            a = g.create_grid(b, size, lambda p: np.linalg.norm(p, axis=1) ** 0.5)
            w = Weight(a=a, alpha=0.5, seminorm_estimate=1.0)
            cfg = ex.ExponentConfig(n=2, m=1, N=1, p=2.0, q=2.2, alpha=0.5)
            der = ex.derive(cfg)
            out = hn.caccioppoli_scan(u, w, cfg, der, g.ball([0.0, 0.0], 0.48), R0=0.1)
            consts.append(out["constant"])
        assert abs(consts[1] - consts[0]) / consts[0] < 0.25

    def test_reverse_holder_packaging(self, model2d):
        u, w, cfg = model2d
        der = ex.derive(cfg)
        out = hn.reverse_holder_scan(u, w, cfg, der, g.ball([0.0, 0.0], 0.48), R0=0.1)
        assert 0 < out["kappa"] < 1
        assert out["theta_rh"] == 0.5
        assert math.isfinite(out["constant"])
        assert np.all(out["f1"].scalar() >= 0) and np.all(out["f2"].scalar() >= 0)

    def test_constant_energy_passes_with_slack(self, weight64_mod):
        b = g.box([-0.5, -0.5], [0.5, 0.5])
        u = g.create_grid(b, 64, lambda p: p[:, 0])  # H_m constant-ish
        cfg = ex.ExponentConfig(n=2, m=1, N=1, p=2.0, q=2.2, alpha=0.5)
        der = ex.derive(cfg)
        out = hn.reverse_holder_scan(u, weight64_mod, cfg, der, g.ball([0.0, 0.0], 0.48), R0=0.1)
        assert math.isfinite(out["constant"])


class TestSelfImprove:
    def test_full_chain(self, model2d):
        u, w, cfg = model2d
        out = hn.self_improve(u, w, cfg, g.ball([0.0, 0.0], 0.48), R0=0.1)
        assert out["status"] == "pass"
        assert out["stages"]["certificate"]["eps_max"] > 0
        assert out["stages"]["gehring_verify"]["premise_failures"] == 0

    def test_internal_consistency_gate(self, model2d):
        # the measured reverse-Hoelder output feeds the premise verbatim, so
        # the premise holds on every scanned ball by construction
        u, w, cfg = model2d
        out = hn.self_improve(u, w, cfg, g.ball([0.0, 0.0], 0.48), R0=0.1)
        assert out["stages"]["gehring_verify"]["premise_pass_fraction"] == 1.0

    def test_kappa_to_one_collapses_epsilon(self, model2d):
        u, w, cfg = model2d
        out = hn.self_improve(u, w, cfg, g.ball([0.0, 0.0], 0.48), R0=0.1,
                              kappa_override=1 - 1e-9)
        assert out["stages"]["certificate"]["eps_max"] <= 1e-9

    def test_corollary_mode(self, model2d):
        u, w, cfg0 = model2d
        cfg = ex.ExponentConfig(n=2, m=1, N=1, p=2.0, q=2.2, alpha=0.5, beta_src=1.0)
        out = hn.self_improve(u, w, cfg, g.ball([0.0, 0.0], 0.48), R0=0.1)
        assert out["stages"]["improvement"]["mode"] == "corollary"
        assert out["stages"]["improvement"]["target_integrability"] == 1.0

    def test_hand_picked_block_gives_wider_epsilon(self, model2d):
        u, w_half, _ = model2d
        b = g.box([-0.5, -0.5], [0.5, 0.5])
        a3 = g.create_grid(b, 64, lambda p: np.linalg.norm(p, axis=1) ** 3)
        w = Weight(a=a3, alpha=3.0, seminorm_estimate=4.0)
        cfg = ex.ExponentConfig(n=2, m=1, N=1, p=2.0, q=2.2, alpha=3.0, a_seminorm=4.0)
        der = ex.make_derived(cfg, {"p": (2.5,), "q": (2.5,)}, delta0=0.8)
        out = hn.self_improve(u, w, cfg, g.ball([0.0, 0.0], 0.48), derived=der, R0=0.1)
        assert out["status"] == "pass"
        assert out["stages"]["certificate"]["eps0"] == pytest.approx(0.25, rel=1e-12)
