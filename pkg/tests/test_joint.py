"""Joint (U, Z) engine tests: init, stepping, recursions, marginals."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pytest

from fastconv import engine, models
from fastconv.engine import TimeGrid, build_grid, build_kernel, propagate, time_grid_for
from fastconv.joint import (
    GeometricAverageRecursion,
    IntegratedSquareRecursion,
    JointDensity,
    UGrid,
    joint_init,
    joint_propagate,
    joint_step,
    marginal_u,
    marginal_z,
)
from fastconv.models import Measure

RN = Measure.RISK_NEUTRAL
OBJ = Measure.OBJECTIVE


@dataclass(frozen=True)
class IdentityRecursion:
    """u^{i+1} = u^i: the functional stays frozen, phase 2 is a no-op."""

    kind = "identity"

    def shrink(self, i):
        return 1.0

    def jacobian(self, i):
        return 1.0

    def state_term(self, z, i, dtau):
        return 0.0 * np.asarray(z, dtype=float)


@pytest.fixture
def small_setup(piecewise_eps2):
    model = piecewise_eps2
    zg = build_grid(-10.24, 2**9)
    ug = UGrid(-2.56, 2**9)
    return model, zg, ug


class TestUGrid:
    def test_spacing(self):
        assert UGrid(-2.56, 2**11).du == pytest.approx(0.0025)
        assert UGrid(-5.12, 2**11).du == pytest.approx(0.005)

    def test_validation(self):
        with pytest.raises(ValueError):
            UGrid(1.0, 64)
        with pytest.raises(ValueError):
            UGrid(-1.0, 100)


class TestRecursions:
    def test_asian_jacobian_telescopes(self):
        rec = GeometricAverageRecursion(model=models.PiecewiseParams(sigma=1.0, epsilon=2.0))
        n = 57
        prod = 1.0
        for i in range(1, n):
            prod *= rec.jacobian(i)
        assert prod == pytest.approx(n, rel=1e-12)

    def test_asian_first_step_jacobian_is_two(self):
        rec = GeometricAverageRecursion(model=models.PiecewiseParams(sigma=1.0, epsilon=2.0))
        assert rec.jacobian(1) == pytest.approx(2.0)
        assert rec.shrink(1) == pytest.approx(0.5)

    def test_asian_state_term_uses_inverse_transform(self, piecewise_eps2):
        rec = GeometricAverageRecursion(model=piecewise_eps2, t0=0.25)
        z = np.array([0.0, 1.0, -1.0])
        i, dtau = 3, 1e-3
        x = models.lamperti_inverse(piecewise_eps2, RN, z, (i + 1) * dtau)
        weight = dtau / 2.0 + math.sqrt(0.25) / (i + 1)
        assert np.allclose(rec.state_term(z, i, dtau), weight * x, rtol=1e-14)

    def test_vnb_recursion_shape(self, vnb_reference):
        rec = IntegratedSquareRecursion(model=vnb_reference)
        assert rec.jacobian(5) == 1.0
        assert rec.shrink(5) == 1.0
        z = np.linspace(-3, 3, 7)
        term = rec.state_term(z, 2, 1e-3)
        assert np.all(term >= 0.0)  # dtau * omega^2


class TestJointInit:
    def test_initial_mass_and_placement(self, small_setup):
        model, zg, ug = small_setup
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            kernel = build_kernel(zg, 1e-3)
        rec = GeometricAverageRecursion(model=model, t0=0.0)
        J = joint_init(model, RN, rec, zg, ug, kernel)
        assert J.step_index == 1
        assert J.tau == pytest.approx(1e-3)
        assert J.mass == pytest.approx(1.0, abs=1e-9)

    def test_deposit_matches_plain_loop_oracle(self, small_setup):
        model, zg, ug = small_setup
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            kernel = build_kernel(zg, 1e-3)
        rec = GeometricAverageRecursion(model=model, t0=0.0)
        J = joint_init(model, RN, rec, zg, ug, kernel)

        # oracle: push the first-step gaussian through U^1 cell by cell
        p1 = engine.initial_density(zg, 1e-3).values
        u1 = rec.state_term(zg.nodes, 0, 1e-3)
        expected = np.zeros((ug.m_u, zg.m))
        for k in range(zg.m):
            pos = (u1[k] - ug.u_min) / ug.du
            lo = min(max(int(math.floor(pos)), 0), ug.m_u - 1)
            hi = min(lo + 1, ug.m_u - 1)
            w = min(max(pos - lo, 0.0), 1.0)
            expected[lo, k] += (1.0 - w) * p1[k] / ug.du
            expected[hi, k] += w * p1[k] / ug.du
        assert np.allclose(J.values, expected, rtol=1e-12, atol=1e-15)

    def test_vnb_initial_support_nonnegative(self, vnb_reference):
        zg = build_grid(-10.24, 2**9)
        ug = UGrid(-5.12, 2**9)
        kernel = build_kernel(zg, 1e-3)
        J = joint_init(vnb_reference, RN, IntegratedSquareRecursion(vnb_reference), zg, ug, kernel)
        below = ug.nodes < 0.0
        assert J.values[below, :].sum() == 0.0


class TestJointStep:
    def test_identity_recursion_marginal_matches_1d_exactly(self, small_setup):
        model, zg, ug = small_setup
        tg = TimeGrid(1e-3, 60)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            J = joint_propagate(model, RN, IdentityRecursion(), zg, ug, tg)
            (P,) = propagate(model, RN, zg, tg)
        # identical operations modulo FFT batch-shape round-off
        assert np.allclose(marginal_z(J).values, P.values, rtol=1e-12, atol=1e-13)

    def test_mass_monotone_per_step(self, small_setup):
        model, zg, ug = small_setup
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            kernel = build_kernel(zg, 1e-3)
            rec = GeometricAverageRecursion(model=model, t0=0.0)
            model_r = engine._resolve_model(model, zg)
            J = joint_init(model_r, RN, rec, zg, ug, kernel)
            for _ in range(40):
                nxt = joint_step(J, model_r, RN, rec, zg, ug, kernel)
                assert nxt.mass <= J.mass + 1e-12
                J = nxt

    def test_marginal_mass_consistency(self, small_setup):
        model, zg, ug = small_setup
        tg = TimeGrid(1e-3, 50)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            J = joint_propagate(model, RN, GeometricAverageRecursion(model=model, t0=0.0), zg, ug, tg)
        mu_mass = ug.du * marginal_u(J).values.sum()
        mz_mass = zg.dz * marginal_z(J).values.sum()
        assert mu_mass == pytest.approx(J.mass, abs=1e-12)
        assert mz_mass == pytest.approx(J.mass, abs=1e-12)

    def test_invalid_step_index(self, small_setup):
        model, zg, ug = small_setup
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            kernel = build_kernel(zg, 1e-3)
        J = JointDensity(np.zeros((ug.m_u, zg.m)), tau=0.0, step_index=0, du=ug.du, dz=zg.dz)
        with pytest.raises(ValueError):
            joint_step(J, model, RN, IdentityRecursion(), zg, ug, kernel)


class TestJointPropagate:
    def test_z_marginal_consistency_asian(self, small_setup):
        model, zg, ug = small_setup
        tg = TimeGrid(1e-3, 200)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rec = GeometricAverageRecursion(model=model, t0=0.0)
            J = joint_propagate(model, RN, rec, zg, ug, tg)
            (P,) = propagate(model, RN, zg, tg)
        l1 = zg.dz * float(np.abs(marginal_z(J).values - P.values).sum())
        assert l1 <= 5e-3

    def test_z_marginal_consistency_vnb(self, vnb_reference):
        zg = build_grid(-10.24, 2**9)
        ug = UGrid(-5.12, 2**9)
        tg = time_grid_for(math.log(0.7 / 0.2), 5e-3)
        J = joint_propagate(vnb_reference, RN, IntegratedSquareRecursion(vnb_reference), zg, ug, tg)
        (P,) = propagate(vnb_reference, RN, zg, tg)
        l1 = zg.dz * float(np.abs(marginal_z(J).values - P.values).sum())
        assert l1 <= 5e-3

    def test_vnb_support_stays_nonnegative(self, vnb_reference):
        zg = build_grid(-10.24, 2**9)
        ug = UGrid(-5.12, 2**9)
        tg = time_grid_for(math.log(0.7 / 0.2), 5e-3)
        J = joint_propagate(vnb_reference, RN, IntegratedSquareRecursion(vnb_reference), zg, ug, tg)
        below = ug.nodes < -3.0 * ug.du
        assert J.values[below, :].sum() * ug.du * zg.dz <= 1e-9 * J.mass

    def test_snapshots_match_separate_runs(self, vnb_reference):
        zg = build_grid(-10.24, 2**8)
        ug = UGrid(-5.12, 2**8)
        rec = IntegratedSquareRecursion(vnb_reference)
        tg = TimeGrid(2e-3, 100)
        J_end, = [joint_propagate(vnb_reference, RN, rec, zg, ug, tg)]
        snaps = joint_propagate(
            vnb_reference, RN, rec, zg, ug, tg, report_taus=[0.1, tg.tau_end]
        )
        assert snaps[0].tau == pytest.approx(0.1)
        assert np.allclose(snaps[1].values, J_end.values, rtol=1e-13, atol=1e-16)

    def test_joint_density_validation(self):
        with pytest.raises(ValueError):
            JointDensity(np.full((4, 4), -1.0), tau=0.1, step_index=1, du=0.1, dz=0.1)
        with pytest.raises(ValueError):
            JointDensity(np.zeros(4), tau=0.1, step_index=1, du=0.1, dz=0.1)
