"""Random fields, PDE data generation, perturbation, serialization."""
import numpy as np
import pytest

import symflow.datasets as dsmod
from symflow.datasets import (
    Dataset,
    GrfSpec,
    Sample,
    add_noise,
    downsample,
    gen_burgers,
    gen_darcy,
    load,
    sample_grf,
    save,
)
from symflow.datasets import UnstableSampleError, _sample_seed, _solve_burgers
from symflow.grid_compiler import Grid, GridField


class TestGrf:
    def test_pooled_variance_matches_sigma2(self):
        # single fields are too noisy; pool many to pin the variance
        g = Grid.regular(("x", "y"), (48, 48), (False, False))
        spec = GrfSpec(sigma2=1.0)
        v = np.concatenate(
            [sample_grf(g, spec, seed=s).values.ravel() for s in range(60)]
        )
        assert abs(v.var() - 1.0) <= 0.1
        assert abs(v.mean()) <= 0.05

    def test_sigma2_zero_gives_zero_field(self):
        g = Grid.regular(("x", "y"), (16, 16), (False, False))
        f = sample_grf(g, GrfSpec(sigma2=0.0), seed=5)
        assert np.all(f.values == 0.0)

    def test_seed_determinism(self):
        g = Grid.regular(("x",), (64,), (True,))
        a = sample_grf(g, GrfSpec(), seed=11).values
        b = sample_grf(g, GrfSpec(), seed=11).values
        c = sample_grf(g, GrfSpec(), seed=12).values
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_resolution_consistency_periodic(self):
        # the sample is a fixed function: finer grids interleave coarser ones
        spec = GrfSpec()
        coarse = sample_grf(Grid.regular(("x",), (64,), (True,)), spec, seed=3)
        fine = sample_grf(Grid.regular(("x",), (128,), (True,)), spec, seed=3)
        assert np.array_equal(fine.values[::2], coarse.values)

    def test_resolution_consistency_nonperiodic_2d(self):
        spec = GrfSpec()
        g1 = Grid.regular(("x", "y"), (33, 33), (False, False))
        g2 = Grid.regular(("x", "y"), (65, 65), (False, False))
        a = sample_grf(g1, spec, seed=9).values
        b = sample_grf(g2, spec, seed=9).values
        assert np.array_equal(b[::2, ::2], a)

    def test_power_spectrum_kind(self):
        g = Grid.regular(("x", "y"), (24, 24), (False, False))
        f = sample_grf(g, GrfSpec(kind="power_spectrum", decay=4.0), seed=2)
        assert np.all(np.isfinite(f.values))

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="kind"):
            GrfSpec(kind="matern")
        with pytest.raises(ValueError):
            GrfSpec(length_scale=0.0)
        with pytest.raises(ValueError):
            GrfSpec(band=0)
        with pytest.raises(ValueError):
            GrfSpec(sigma2=-1.0)

    def test_spec_json_round_trip(self):
        spec = GrfSpec(kind="power_spectrum", decay=3.0, sigma2=2.0, band=5, seed=4)
        assert GrfSpec.from_json(spec.to_json()) == spec


class TestSampleSeeds:
    def test_counter_derivation_is_stable(self):
        a = _sample_seed(42, 3)
        assert a == _sample_seed(42, 3)
        assert a != _sample_seed(42, 4)
        assert a != _sample_seed(43, 3)
        assert a != _sample_seed(42, 3, retry=1)


class TestBurgersSolver:
    def test_constant_state_is_fixed_point(self):
        traj = _solve_burgers(np.full(64, 0.7), 0.01, np.linspace(0, 1, 9))
        assert np.abs(traj - 0.7).max() <= 1e-12

    def test_self_convergence_under_refinement(self):
        fine = Grid.regular(("x",), (512,), (True,))
        u0 = sample_grf(fine, GrfSpec(), seed=42).values
        t_out = np.linspace(0, 1, 5)
        ref = _solve_burgers(u0, 0.01, t_out)
        mid = _solve_burgers(u0[::2], 0.01, t_out)
        rel = np.linalg.norm(mid - ref[:, ::2]) / np.linalg.norm(ref[:, ::2])
        assert rel <= 1e-4

    def test_energy_decays(self):
        g = Grid.regular(("x",), (256,), (True,))
        u0 = sample_grf(g, GrfSpec(), seed=1).values
        traj = _solve_burgers(u0, 0.01, np.linspace(0, 1, 21))
        en = np.mean(traj ** 2, axis=1)
        assert np.all(np.diff(en) <= 1e-12)


class TestGenBurgers:
    def test_sample_structure(self):
        g = Grid.regular(("x", "t"), (32, 25), (True, False))
        ds = gen_burgers(3, grid=g, seed=0)
        assert ds.pde == "burgers" and len(ds.samples) == 3
        smp = ds.samples[0]
        assert set(smp.inputs) == {"u0", "x", "t"}
        # u0 channel is the initial condition broadcast along t
        u0 = smp.inputs["u0"].values
        assert np.array_equal(u0, np.broadcast_to(u0[:, :1], g.shape))
        assert np.array_equal(smp.target.values[:, 0], u0[:, 0])

    def test_determinism(self):
        g = Grid.regular(("x", "t"), (32, 13), (True, False))
        a = gen_burgers(2, grid=g, seed=5)
        b = gen_burgers(2, grid=g, seed=5)
        for sa, sb in zip(a.samples, b.samples):
            assert np.array_equal(sa.target.values, sb.target.values)

    def test_output_resolution_shares_trajectories(self):
        # same seeds at half the x resolution subsample the same solve
        fine = gen_burgers(2, grid=Grid.regular(("x", "t"), (64, 13), (True, False)), seed=7)
        coarse = gen_burgers(2, grid=Grid.regular(("x", "t"), (32, 13), (True, False)), seed=7)
        for sf, sc in zip(fine.samples, coarse.samples):
            assert np.array_equal(sf.target.values[::2, :], sc.target.values)

    def test_grid_periodicity_validated(self):
        bad = Grid.regular(("x", "t"), (32, 13), (False, False))
        with pytest.raises(ValueError, match="periodic"):
            gen_burgers(1, grid=bad)

    def test_resample_on_instability(self, monkeypatch):
        calls = {"n": 0}
        real = dsmod._burgers_trajectory

        def flaky(u0, nu, n_t, stride):
            calls["n"] += 1
            if calls["n"] == 1:
                raise UnstableSampleError("injected")
            return real(u0, nu, n_t, stride)

        monkeypatch.setattr(dsmod, "_burgers_trajectory", flaky)
        g = Grid.regular(("x", "t"), (32, 13), (True, False))
        ds = gen_burgers(1, grid=g, seed=0)
        assert ds.meta["resampled"] == 1
        assert calls["n"] == 2


class TestGenDarcy:
    def test_sample_structure(self):
        g = Grid.regular(("x", "y"), (33, 33), (False, False))
        ds = gen_darcy(2, grid=g, seed=1)
        smp = ds.samples[0]
        assert set(smp.inputs) == {"k", "f", "x", "y"}
        assert set(np.unique(smp.inputs["k"].values)) == {3.0, 12.0}
        assert np.all(smp.inputs["f"].values == 1.0)
        u = smp.target.values
        assert np.all(u[0, :] == 0) and np.all(u[:, -1] == 0)

    def test_permeability_resolution_consistent(self):
        g1 = Grid.regular(("x", "y"), (33, 33), (False, False))
        g2 = Grid.regular(("x", "y"), (65, 65), (False, False))
        a = gen_darcy(2, grid=g1, seed=3)
        b = gen_darcy(2, grid=g2, seed=3)
        for sa, sb in zip(a.samples, b.samples):
            assert np.array_equal(sb.inputs["k"].values[::2, ::2],
                                  sa.inputs["k"].values)
            # solutions agree to discretization error only
            rel = (np.linalg.norm(sb.target.values[::2, ::2] - sa.target.values)
                   / np.linalg.norm(sa.target.values))
            assert rel <= 5e-2

    def test_grid_validation(self):
        with pytest.raises(ValueError, match="non-periodic"):
            gen_darcy(1, grid=Grid.regular(("x", "y"), (32, 32), (True, False)))
        with pytest.raises(ValueError, match="square"):
            gen_darcy(1, grid=Grid.regular(("x", "y"), (33, 17), (False, False)))


class TestNoise:
    def _tiny(self):
        g = Grid.regular(("x", "y"), (17, 17), (False, False))
        return gen_darcy(3, grid=g, seed=2)

    def test_level_zero_is_identity(self):
        ds = self._tiny()
        assert add_noise(ds, 0.0, seed=9) is ds

    def test_level_scales_with_target_std(self):
        ds = self._tiny()
        noisy = add_noise(ds, 0.2, seed=9)
        for a, b in zip(ds.samples, noisy.samples):
            d = b.target.values - a.target.values
            sd = np.std(a.target.values)
            assert 0.1 * sd <= np.std(d) <= 0.3 * sd
            for name in a.inputs:
                assert np.array_equal(a.inputs[name].values, b.inputs[name].values)
        assert noisy.meta["noise_level"] == 0.2

    def test_determinism_and_negative_rejected(self):
        ds = self._tiny()
        a = add_noise(ds, 0.1, seed=4)
        b = add_noise(ds, 0.1, seed=4)
        for sa, sb in zip(a.samples, b.samples):
            assert np.array_equal(sa.target.values, sb.target.values)
        with pytest.raises(ValueError):
            add_noise(ds, -0.1)


class TestContainer:
    def _roundtrip(self, ds, tmp_path):
        p = tmp_path / "d.sfw"
        save(ds, str(p))
        return load(str(p)), p

    def test_round_trip_bit_identical(self, tmp_path):
        g = Grid.regular(("x", "t"), (32, 13), (True, False))
        ds = gen_burgers(2, grid=g, seed=0)
        ds2, _ = self._roundtrip(ds, tmp_path)
        assert ds2.pde == ds.pde and ds2.grid == ds.grid
        assert ds2.meta == dict(ds.meta)
        for a, b in zip(ds.samples, ds2.samples):
            assert np.array_equal(a.target.values, b.target.values)
            assert set(a.inputs) == set(b.inputs)
            for name in a.inputs:
                assert np.array_equal(a.inputs[name].values, b.inputs[name].values)

    def test_save_is_byte_deterministic(self, tmp_path):
        g = Grid.regular(("x", "y"), (17, 17), (False, False))
        ds = gen_darcy(1, grid=g, seed=0)
        p1, p2 = tmp_path / "a.sfw", tmp_path / "b.sfw"
        save(ds, str(p1))
        save(ds, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.sfw"
        p.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            load(str(p))

    def test_truncated_payload_rejected(self, tmp_path):
        g = Grid.regular(("x", "y"), (17, 17), (False, False))
        ds = gen_darcy(1, grid=g, seed=0)
        p = tmp_path / "d.sfw"
        save(ds, str(p))
        raw = p.read_bytes()
        p.write_bytes(raw[:-16])
        with pytest.raises(ValueError, match="payload size"):
            load(str(p))

    def test_empty_dataset_rejected(self, tmp_path):
        g = Grid.regular(("x", "y"), (17, 17), (False, False))
        ds = Dataset("darcy", g, ())
        with pytest.raises(ValueError, match="empty"):
            save(ds, str(tmp_path / "e.sfw"))


class TestDownsample:
    def test_nonperiodic_keeps_endpoints(self):
        g = Grid.regular(("x", "y"), (33, 33), (False, False))
        ds = gen_darcy(1, grid=g, seed=0)
        dd = downsample(ds, 2)
        assert dd.grid.shape == (17, 17)
        assert np.array_equal(dd.samples[0].target.values,
                              ds.samples[0].target.values[::2, ::2])
        x = dd.samples[0].inputs["x"].values
        assert x[0, 0] == 0.0 and x[-1, 0] == 1.0

    def test_periodic_divides_n(self):
        g = Grid.regular(("x", "t"), (32, 13), (True, False))
        ds = gen_burgers(1, grid=g, seed=0)
        dd = downsample(ds, 2)
        assert dd.grid.shape == (16, 7)
        with pytest.raises(ValueError, match="not divisible"):
            downsample(ds, 3)

    def test_factor_one_is_identity(self):
        g = Grid.regular(("x", "y"), (17, 17), (False, False))
        ds = gen_darcy(1, grid=g, seed=0)
        assert downsample(ds, 1) is ds

    def test_meta_tracks_factor(self):
        g = Grid.regular(("x", "y"), (33, 33), (False, False))
        ds = gen_darcy(1, grid=g, seed=0)
        assert downsample(downsample(ds, 2), 2).meta["downsampled_by"] == 4


class TestSampleValidation:
    def test_mismatched_grids_rejected(self):
        g1 = Grid.regular(("x",), (8,), (True,))
        g2 = Grid.regular(("x",), (16,), (True,))
        with pytest.raises(ValueError, match="inconsistent"):
            Sample(inputs={"u0": GridField(np.zeros(8), g1)},
                   target=GridField(np.zeros(16), g2))
