"""Integrator schemes: steady states, order, reversibility, conservation, batching."""

import math

import numpy as np
import pytest

from eulergibbs.flow import (
    EnsembleEvolution,
    IntegrationError,
    IntegratorConfig,
    Trajectory,
    evolve,
    evolve_coeffs,
    step,
)
from eulergibbs.spectral import SpectralField, enstrophy, energy, sobolev_norm

from conftest import random_field
from test_drift import decaying_field

TWO_PI = 2.0 * math.pi


class TestConfig:
    def test_defaults_valid(self):
        cfg = IntegratorConfig()
        assert cfg.scheme == "rk4"
        assert cfg.dt == 1e-3
        assert cfg.fixed_point_tol == 1e-12

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"scheme": "euler"},
            {"dt": 0.0},
            {"dt": -1e-3},
            {"snapshot_stride": -1},
            {"fixed_point_tol": 0.0},
            {"max_fixed_point_iters": 0},
            {"drift_method": "magic"},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            IntegratorConfig(**kwargs)


class TestStep:
    @pytest.mark.parametrize("scheme", ["rk4", "implicit_midpoint"])
    def test_single_mode_unchanged(self, scheme):
        f = SpectralField.from_modes(TWO_PI, (3, 3), {(2, 1): 0.8 - 0.1j})
        cfg = IntegratorConfig(scheme=scheme, dt=1e-2, t_final=1.0)
        g = step(f, cfg)
        assert np.max(np.abs(g.coeffs - f.coeffs)) <= 1e-13

    @pytest.mark.parametrize("scheme", ["rk4", "implicit_midpoint"])
    def test_zero_field_fixed(self, scheme):
        z = SpectralField.zeros(TWO_PI, (2, 2))
        cfg = IntegratorConfig(scheme=scheme, dt=1e-2, t_final=1.0)
        assert np.all(step(z, cfg).coeffs == 0.0)

    def test_rk4_self_convergence_order(self, rng):
        # Richardson triplet: halving dt should cut the increment by about 2^4
        f = decaying_field(rng, TWO_PI, (4, 4))
        finals = []
        for dt in (0.01, 0.005, 0.0025):
            cfg = IntegratorConfig(scheme="rk4", dt=dt, t_final=0.1)
            finals.append(evolve(f, cfg).final)
        coarse = sobolev_norm(finals[0] - finals[1], 0.0)
        fine = sobolev_norm(finals[1] - finals[2], 0.0)
        ratio = coarse / fine
        assert 10.0 <= ratio <= 25.0

    def test_midpoint_stall_reported(self, rng):
        f = random_field(rng, TWO_PI, (3, 3), scale=20.0)
        cfg = IntegratorConfig(
            scheme="implicit_midpoint", dt=5.0, t_final=5.0, max_fixed_point_iters=3
        )
        with pytest.raises(IntegrationError):
            step(f, cfg)


class TestEvolve:
    def test_shell_steady_state(self):
        f = SpectralField.from_modes(
            TWO_PI, (4, 4), {(1, 0): 0.9 + 0.4j, (0, 1): -0.2 + 1.1j}
        )
        cfg = IntegratorConfig(scheme="rk4", dt=1e-3, t_final=2.0)
        out = evolve(f, cfg)
        assert sobolev_norm(out.final - f, 0.0) <= 1e-10

    def test_reversibility(self, rng):
        f = decaying_field(rng, TWO_PI, (6, 6))
        forward = IntegratorConfig(scheme="rk4", dt=1e-3, t_final=1.0)
        backward = IntegratorConfig(scheme="rk4", dt=1e-3, t_final=-1.0)
        there = evolve(f, forward).final
        back = evolve(there, backward).final
        assert sobolev_norm(back - f, 0.0) <= 1e-6

    def test_midpoint_conserves_enstrophy(self, rng):
        f = decaying_field(rng, TWO_PI, (4, 4))
        cfg = IntegratorConfig(scheme="implicit_midpoint", dt=1e-2, t_final=1.0)
        out = evolve(f, cfg)
        assert out.enstrophy_drift <= 1e-8
        assert out.energy_drift <= 1e-8

    def test_rk4_small_conservation_drift(self, rng):
        f = decaying_field(rng, TWO_PI, (4, 4))
        cfg = IntegratorConfig(scheme="rk4", dt=1e-3, t_final=0.5)
        out = evolve(f, cfg)
        assert out.enstrophy_drift <= 1e-10

    def test_snapshot_stride(self, rng):
        f = decaying_field(rng, TWO_PI, (3, 3))
        cfg = IntegratorConfig(scheme="rk4", dt=1e-2, t_final=0.05, snapshot_stride=2)
        out = evolve(f, cfg)
        times = [t for t, _ in out.samples]
        assert times == pytest.approx([0.0, 0.02, 0.04, 0.05])

    def test_endpoints_only_by_default(self, rng):
        f = decaying_field(rng, TWO_PI, (3, 3))
        cfg = IntegratorConfig(scheme="rk4", dt=1e-2, t_final=0.1)
        out = evolve(f, cfg)
        assert len(out.samples) == 2
        assert out.samples[0][1] == f

    def test_fractional_horizon(self, rng):
        f = decaying_field(rng, TWO_PI, (3, 3))
        cfg = IntegratorConfig(scheme="rk4", dt=1e-2, t_final=0.025)
        out = evolve(f, cfg)
        assert out.samples[-1][0] == pytest.approx(0.025)

    def test_zero_horizon(self, rng):
        f = decaying_field(rng, TWO_PI, (3, 3))
        cfg = IntegratorConfig(scheme="rk4", dt=1e-2, t_final=0.0)
        out = evolve(f, cfg)
        assert len(out.samples) == 1
        assert out.final == f

    def test_determinism(self, rng):
        f = decaying_field(rng, TWO_PI, (4, 4))
        cfg = IntegratorConfig(scheme="rk4", dt=1e-2, t_final=0.3)
        a = evolve(f, cfg).final
        b = evolve(f, cfg).final
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_records_schema(self, rng):
        f = decaying_field(rng, TWO_PI, (2, 2))
        cfg = IntegratorConfig(scheme="rk4", dt=1e-2, t_final=0.02)
        recs = evolve(f, cfg).records()
        assert [r["t"] for r in recs] == pytest.approx([0.0, 0.02])
        for r in recs:
            assert r["schema"] == "trajectory.v1"
            assert set(r) == {"schema", "t", "energy", "enstrophy", "field"}
            rebuilt = SpectralField.from_record(r["field"])
            assert rebuilt.cutoff == f.cutoff


class TestEnsembleEvolution:
    def test_batch_matches_single(self, rng):
        fields = [decaying_field(rng, TWO_PI, (4, 4)) for _ in range(6)]
        cfg = IntegratorConfig(scheme="rk4", dt=1e-2, t_final=0.2)
        batch = evolve_coeffs(np.stack([f.coeffs for f in fields]), TWO_PI, (4, 4), cfg)
        assert batch.failed_members == ()
        for row, f in zip(batch.coeffs, fields):
            single = evolve(f, cfg).final
            assert np.array_equal(row, single.coeffs)

    def test_thread_count_is_bitwise_irrelevant(self, rng):
        coeffs = np.stack(
            [decaying_field(rng, TWO_PI, (4, 4)).coeffs for _ in range(11)]
        )
        cfg = IntegratorConfig(scheme="rk4", dt=1e-2, t_final=0.2)
        one = evolve_coeffs(coeffs, TWO_PI, (4, 4), cfg, threads=1)
        three = evolve_coeffs(coeffs, TWO_PI, (4, 4), cfg, threads=3)
        assert np.array_equal(one.coeffs, three.coeffs)

    def test_midpoint_batch_matches_single(self, rng):
        fields = [decaying_field(rng, TWO_PI, (3, 3)) for _ in range(4)]
        cfg = IntegratorConfig(scheme="implicit_midpoint", dt=1e-2, t_final=0.1)
        batch = evolve_coeffs(np.stack([f.coeffs for f in fields]), TWO_PI, (3, 3), cfg)
        for row, f in zip(batch.coeffs, fields):
            assert np.array_equal(row, evolve(f, cfg).final.coeffs)

    def test_failures_reported_not_raised(self, rng):
        good = decaying_field(rng, TWO_PI, (3, 3))
        wild = random_field(rng, TWO_PI, (3, 3), scale=30.0)
        coeffs = np.stack([good.coeffs, wild.coeffs])
        cfg = IntegratorConfig(
            scheme="implicit_midpoint", dt=5.0, t_final=10.0, max_fixed_point_iters=3
        )
        out = evolve_coeffs(coeffs, TWO_PI, (3, 3), cfg)
        assert 1 in out.failed_members
        assert np.isnan(out.coeffs[out.failed_members[0]]).all()
        for i in range(coeffs.shape[0]):
            if i not in out.failed_members:
                assert np.isfinite(out.coeffs[i]).all()

    def test_pseudo_spectral_backend_agrees(self, rng):
        coeffs = np.stack([decaying_field(rng, TWO_PI, (4, 4)).coeffs for _ in range(3)])
        triad = IntegratorConfig(scheme="rk4", dt=1e-2, t_final=0.2, drift_method="triad_sum")
        pseudo = IntegratorConfig(
            scheme="rk4", dt=1e-2, t_final=0.2, drift_method="pseudo_spectral"
        )
        a = evolve_coeffs(coeffs, TWO_PI, (4, 4), triad).coeffs
        b = evolve_coeffs(coeffs, TWO_PI, (4, 4), pseudo).coeffs
        assert np.max(np.abs(a - b)) <= 1e-9
