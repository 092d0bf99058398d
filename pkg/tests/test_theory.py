import math

import numpy as np
import pytest

from proxlmc import potentials
from proxlmc.samplers import run_replicas
from proxlmc.theory import (
    TheoryInputs,
    c_of_nu,
    k_tau,
    kl_budget,
    moment_constant,
    noise_moment_constant,
    w2_bias_bound,
    w2_budget,
)

import helpers


BASE = TheoryInputs(d=10, lambda_v=1.0, r_v=1.0, kappa=1.0, alpha=1.0, tau=0.1, m0=0.0)


class TestNoiseConstants:
    def test_edge_values(self):
        assert noise_moment_constant(0.0) == 1.0
        assert noise_moment_constant(4.0) == pytest.approx(12.0, rel=1e-15)

    def test_jensen_branch_below_two(self):
        for m in (0.5, 1.0, 1.5):
            assert noise_moment_constant(m) == pytest.approx(2.0 ** (m / 2.0))

    def test_gamma_branch_at_two(self):
        assert noise_moment_constant(2.0) == pytest.approx(2.0, rel=1e-15)

    def test_negative_order_rejected(self):
        with pytest.raises(ValueError):
            noise_moment_constant(-1.0)


class TestMomentConstant:
    def test_zeroth_is_one(self):
        assert moment_constant(0.0, BASE) == 1.0

    def test_order_two_matches_hand_formula(self):
        d, lam, r, kappa, tau, m0 = 10, 1.0, 1.0, 1.0, 0.1, 0.0
        delta = kappa * tau**2
        base = (
            36.0 * kappa**2 / d
            + lam**2 / d * m0
            + (16.0 * kappa * delta + 4.0 * r**2 * lam + 4.0 * delta * r * lam + 8.0 * d)
            / d
            * lam
        )
        assert moment_constant(2.0, BASE) == pytest.approx(base, rel=1e-15)

    def test_double_entry_transcription(self):
        # independent transcription lives in tests/helpers.py
        points = [
            (1.0, TheoryInputs(d=10, lambda_v=0.0, r_v=0.0, kappa=1.0, alpha=1.0, tau=0.1, m0=0.0)),
            (2.0, BASE),
            (2.5, BASE._replace(m0=3.0)),
            (3.0, BASE._replace(d=50, kappa=2.0)),
            (4.0, BASE),
            (6.0, BASE._replace(lambda_v=0.3, tau=0.05)),
        ]
        for m, ti in points:
            mine = helpers.chain_moment_constant(
                m, ti.d, ti.lambda_v, ti.r_v, ti.kappa, ti.alpha, ti.tau, ti.m0
            )
            assert moment_constant(m, ti) == pytest.approx(mine, rel=1e-9), m

    def test_flat_potential_high_order_rejected(self):
        flat = BASE._replace(lambda_v=0.0)
        assert moment_constant(2.0, flat) > 0  # order <= 2 never divides by lambda
        with pytest.raises(ValueError, match="lambda_v"):
            moment_constant(4.0, flat)

    def test_positive_and_monotone_in_kappa(self):
        for m in (0.5, 1.0, 2.0, 2.5, 3.0, 4.0, 6.0):
            prev = 0.0
            for kappa in (0.0, 0.5, 1.0, 2.0, 4.0):
                val = moment_constant(m, BASE._replace(kappa=kappa))
                assert val > 0.0
                assert val >= prev, (m, kappa)
                prev = val

    def test_input_validation(self):
        with pytest.raises(ValueError):
            moment_constant(-1.0, BASE)
        with pytest.raises(ValueError):
            moment_constant(2.0, BASE._replace(d=0))
        with pytest.raises(ValueError):
            moment_constant(2.0, BASE._replace(tau=0.0))
        with pytest.raises(ValueError):
            moment_constant(2.0, BASE._replace(kappa=-1.0))


class TestKTau:
    def test_degree_one_closed_form(self):
        ti = BASE._replace(tau=0.05)
        c2 = moment_constant(2.0, ti)
        manual = 2.0 * ((1.0 + 1.0) * 2.0 * ti.d * ti.tau + c2 * ti.d * ti.tau)
        assert k_tau(ti, 1.0, 1.0).value == pytest.approx(manual, rel=1e-15)

    def test_doubling_tau_doubles_value_at_degree_one(self):
        exact = BASE._replace(kappa=0.0, tau=0.05)
        r = k_tau(exact._replace(tau=0.1), 1.0, 1.0).value / k_tau(exact, 1.0, 1.0).value
        assert r == pytest.approx(2.0, rel=1e-15)
        # with a live accuracy schedule the moment constants pick up a weak
        # tau dependence through delta, so the ratio is only nearly 2
        inexact = BASE._replace(tau=0.05)
        r = k_tau(inexact._replace(tau=0.1), 1.0, 1.0).value / k_tau(inexact, 1.0, 1.0).value
        assert r == pytest.approx(2.0, rel=5e-3)

    def test_double_entry_transcription(self):
        ti = TheoryInputs(d=125, lambda_v=1.0, r_v=0.0, kappa=1.0, alpha=1.0, tau=0.01, m0=0.0)
        mine = helpers.k_tau_formula(ti.d, 3.0, ti.lambda_v, ti.r_v, 1.0, ti.kappa, ti.alpha, ti.tau, ti.m0)
        assert k_tau(ti, 3.0, 1.0).value == pytest.approx(mine, rel=1e-9)
        withr = ti._replace(r_v=1.0)
        mine = helpers.k_tau_formula(withr.d, 3.0, withr.lambda_v, withr.r_v, 1.0, withr.kappa, withr.alpha, withr.tau, withr.m0)
        assert k_tau(withr, 3.0, 1.0).value == pytest.approx(mine, rel=1e-9)

    @pytest.mark.parametrize("q_v,ti", [
        (1.0, BASE),
        (3.0, TheoryInputs(d=27, lambda_v=0.05, r_v=0.0, kappa=1.0, alpha=1.0, m0=0.0)),
    ])
    def test_remark_envelope_on_grid(self, q_v, ti):
        for tau in np.linspace(0.01, 1.0, 100):
            out = k_tau(ti._replace(tau=float(tau)), q_v, 1.0)
            assert out.value <= out.remark_bound * (1.0 + 1e-12), tau

    def test_flat_potential_needs_degree_one(self):
        flat = BASE._replace(lambda_v=0.0, r_v=0.0)
        assert k_tau(flat, 1.0, 1.0).value > 0
        with pytest.raises(ValueError, match="lambda_v"):
            k_tau(flat, 3.0, 1.0)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            k_tau(BASE, 0.5, 1.0)
        with pytest.raises(ValueError):
            k_tau(BASE, 1.0, 0.0)


class TestCOfNu:
    def test_double_entry_transcription(self):
        ti = TheoryInputs(d=27, lambda_v=0.05, r_v=0.0, kappa=1.0, alpha=1.0, m0=0.0)
        mine = helpers.c_of_nu_formula(ti.d, 3.0, 0.5, ti.lambda_v, ti.r_v, ti.kappa, ti.alpha, ti.m0)
        assert c_of_nu(ti, 3.0, 0.5) == pytest.approx(mine, rel=1e-9)

    def test_flat_potential_uses_unit_lambda_inverse(self):
        flat = BASE._replace(lambda_v=0.0, r_v=0.0)
        mine = helpers.c_of_nu_formula(flat.d, 1.0, 0.5, 0.0, 0.0, flat.kappa, flat.alpha, flat.m0)
        assert c_of_nu(flat, 1.0, 0.5) == pytest.approx(mine, rel=1e-9)

    def test_rejects_nonpositive_smoothness(self):
        with pytest.raises(ValueError):
            c_of_nu(BASE, 1.0, 0.0)


class TestKlBudget:
    TI = TheoryInputs(d=10, lambda_v=1.0, r_v=0.0, kappa=1.0, alpha=1.0, m0=0.0)

    def budget(self, eps, alpha=1.0):
        ti = self.TI._replace(alpha=alpha)
        return kl_budget(ti, 1.0, 0.5, 1.0, float(ti.d), eps)

    def test_halving_eps_quadruples_iterations(self):
        for eps in (0.1, 0.05, 0.025):
            ratio = self.budget(eps / 2.0).n_eps / self.budget(eps).n_eps
            assert 3.6 <= ratio <= 4.4, (eps, ratio)

    def test_scaling_exponent_schedule_one(self):
        eps = np.array([1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
        ns = np.array([self.budget(float(e)).n_eps for e in eps], dtype=float)
        slope = np.polyfit(np.log(eps), np.log(ns), 1)[0]
        assert slope == pytest.approx(-2.0, abs=0.15)

    def test_scaling_exponent_schedule_half(self):
        eps = np.array([1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
        ns = np.array([self.budget(float(e), alpha=0.5).n_eps for e in eps], dtype=float)
        slope = np.polyfit(np.log(eps), np.log(ns), 1)[0]
        assert slope == pytest.approx(-3.0, abs=0.15)

    def test_enormous_eps_caps_step_at_one(self):
        ti = self.TI._replace(lambda_v=0.5)
        k1 = k_tau(ti._replace(tau=1.0), 1.0, 1.0).value
        cn = c_of_nu(ti, 1.0, 0.5)
        eps = 3.0 * max(k1, cn * ti.kappa) * 1.001
        out = kl_budget(ti, 1.0, 0.5, 1.0, float(ti.d), eps)
        assert out.tau_eps == 1.0

    def test_outputs_are_mutually_consistent(self):
        out = self.budget(0.05)
        assert out.c_nu == c_of_nu(self.TI, 1.0, 0.5)
        assert out.k_at_tau == k_tau(self.TI._replace(tau=out.tau_eps), 1.0, 1.0).value
        assert out.k_at_tau <= 0.05 / 3.0 * (1.0 + 1e-9)
        assert out.n_eps == math.ceil(3.0 * self.TI.d / (2.0 * 0.05 * out.tau_eps))
        # the schedule constraint also binds
        assert out.c_nu * self.TI.kappa * out.tau_eps <= 0.05 / 3.0 * (1.0 + 1e-9)

    def test_unreachable_accuracy_raises(self):
        ti = self.TI._replace(alpha=4.0)
        with pytest.raises(ValueError, match="reachable"):
            kl_budget(ti, 1.0, 0.5, 1.0, 10.0, 1e-30)

    def test_validation(self):
        with pytest.raises(ValueError):
            self.budget(0.0)
        with pytest.raises(ValueError):
            kl_budget(self.TI._replace(alpha=0.0), 1.0, 0.5, 1.0, 10.0, 0.1)
        with pytest.raises(ValueError):
            kl_budget(self.TI, 1.0, 0.5, 1.0, 0.0, 0.1)


class TestW2Budget:
    TI = TheoryInputs(d=10, lambda_v=0.5, r_v=0.0, kappa=1.0, alpha=1.0, m0=0.0)

    def test_log_term_one_iteration_identity(self):
        eps = 1.0
        out = w2_budget(self.TI, 1.0, 1.0, math.e * eps / 6.0, eps)
        assert out.n_eps == math.ceil(2.0 / (out.tau_eps * self.TI.lambda_v))

    def test_scaling_in_distance(self):
        # budget against targets eps = r^2; log factors in the step-size cap
        # steepen the pure -2 power law a little
        dist = np.array([0.3, 0.1, 0.03, 0.01])
        ns = [w2_budget(self.TI, 1.0, 1.0, 10.0, float(r * r)).n_eps for r in dist]
        slope = np.polyfit(np.log(dist), np.log(ns), 1)[0]
        assert -2.6 <= slope <= -1.8, slope

    def test_stiffer_curvature_allows_larger_steps(self):
        taus = []
        for lam in (0.25, 0.5, 1.0, 2.0):
            ti = self.TI._replace(lambda_v=lam)
            taus.append(w2_budget(ti, 1.0, 1.0, 10.0, 0.01).tau_eps)
        assert all(a <= b for a, b in zip(taus, taus[1:])), taus

    def test_constraints_hold_at_reported_step(self):
        eps = 0.25
        out = w2_budget(self.TI, 1.0, 1.0, 10.0, eps)
        lam = self.TI.lambda_v
        big_l = math.log(6.0 * 10.0 / eps)
        assert out.k_at_tau <= lam * eps / 12.0 * (1.0 + 1e-9)
        assert out.tau_eps ** 2 <= lam**2 * eps / (96.0 * big_l**2) * (1.0 + 1e-9)
        assert out.tau_eps < 1.0 / lam
        assert out.n_eps <= out.n_max
        assert out.n_max == pytest.approx(2.0 * 2.0 * big_l / (out.tau_eps * lam))

    def test_rejects_local_convexity_and_loose_targets(self):
        with pytest.raises(ValueError, match="r_v"):
            w2_budget(self.TI._replace(r_v=1.0), 1.0, 1.0, 10.0, 0.1)
        with pytest.raises(ValueError, match="lambda_v"):
            w2_budget(self.TI._replace(lambda_v=0.0), 1.0, 1.0, 10.0, 0.1)
        with pytest.raises(ValueError, match="6"):
            w2_budget(self.TI, 1.0, 1.0, 10.0, 60.0)

    def test_budget_is_sound_on_the_gaussian(self):
        # the one empirical check in this file: run the proximal chain with
        # exact steps at the returned (tau, n) and verify the end law is
        # inside the promised ball; for a centered Gaussian chain the
        # squared transport distance to N(0, I_d) is (sqrt(v) - 1)^2 * d
        d, eps = 4, 2.0
        ti = TheoryInputs(d=d, lambda_v=1.0, r_v=0.0, kappa=1.0, alpha=1.0, m0=0.0)
        out = w2_budget(ti, 1.0, 1.0, float(d), eps)
        bias = w2_bias_bound(ti._replace(tau=out.tau_eps), 1.0, 1.0, out.n_eps, float(d))
        assert bias <= eps * (1.0 + 1e-9)
        traces = run_replicas(
            "ipla", potentials.gaussian(d), np.zeros(d), out.n_eps,
            tau=out.tau_eps, base_seed=17, n_replicas=128, solver="exact",
        )
        finals = np.stack([t.final_x for t in traces])
        v = float(np.mean(finals**2))
        w2_sq = (math.sqrt(v) - 1.0) ** 2 * d
        assert w2_sq <= eps


class TestW2BiasBound:
    TI = TheoryInputs(d=10, lambda_v=0.5, r_v=0.0, kappa=1.0, alpha=1.0, tau=0.1, m0=0.0)

    def test_start_and_first_step_have_no_inexactness_term(self):
        k_val = k_tau(self.TI, 1.0, 1.0).value
        w2 = 7.0
        lam, tau = self.TI.lambda_v, self.TI.tau
        assert w2_bias_bound(self.TI, 1.0, 1.0, 0, w2) == pytest.approx(
            2.0 * w2 + 4.0 / lam * k_val, rel=1e-15
        )
        assert w2_bias_bound(self.TI, 1.0, 1.0, 1, w2) == pytest.approx(
            2.0 * (1.0 - tau * lam / 2.0) * w2 + 4.0 / lam * k_val, rel=1e-15
        )

    def test_long_run_limit(self):
        lam, tau, kappa, alpha = self.TI.lambda_v, self.TI.tau, self.TI.kappa, self.TI.alpha
        k_val = k_tau(self.TI, 1.0, 1.0).value
        limit = 4.0 / lam * k_val + 2.0 * kappa**2 * tau ** (2.0 + 2.0 * alpha) / (
            1.0 - math.exp(-lam * tau)
        ) ** 2
        assert w2_bias_bound(self.TI, 1.0, 1.0, 10**7, 7.0) == pytest.approx(limit, rel=1e-12)

    def test_exact_chain_bound_decreases_in_k(self):
        exact = self.TI._replace(kappa=0.0)
        vals = [w2_bias_bound(exact, 1.0, 1.0, k, 7.0) for k in range(21)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_validation(self):
        with pytest.raises(ValueError, match="r_v"):
            w2_bias_bound(self.TI._replace(r_v=1.0), 1.0, 1.0, 3, 1.0)
        with pytest.raises(ValueError, match="tau"):
            w2_bias_bound(self.TI._replace(tau=2.1), 1.0, 1.0, 3, 1.0)
        with pytest.raises(ValueError):
            w2_bias_bound(self.TI, 1.0, 1.0, -1, 1.0)
