import math

import numpy as np
import pytest
from scipy import stats

from fwmips._rng import make_rng
from fwmips.aipe import envelope_holds
from fwmips.calibration import load_constants
from fwmips.errors import ConfigError, DimensionError
from fwmips.sketch import (
    JlMatrix,
    SketchEnsemble,
    build_ensemble,
    good_fraction,
    plan_ensemble_size,
    plan_sample_count,
    preserved_mask,
    project_batch,
    sample_matrices,
)


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


class TestBuild:
    def test_formula_instantiation(self):
        ens = build_ensemble(100, 10, 0.5, 0.1, seed=1, k_override=8)
        C_s = load_constants().C_s
        assert ens.k == 8
        assert ens.s == math.ceil(C_s * 4 * math.log(1000))
        assert len(set(ens.seeds)) == 8

    def test_default_k_is_capped_planner(self):
        assert plan_ensemble_size(100, 10, 0.1) == math.ceil((10 + math.log(10)) * math.log(1000))
        assert plan_ensemble_size(10_000, 500, 0.01) == load_constants().jl_cap
        ens = build_ensemble(50, 3, 0.5, 0.1, seed=0)
        assert ens.k == min(math.ceil((3 + math.log(10)) * math.log(150)), 256)

    def test_determinism(self):
        a = build_ensemble(100, 10, 0.5, 0.1, seed=3, k_override=4)
        b = build_ensemble(100, 10, 0.5, 0.1, seed=3, k_override=4)
        for m1, m2 in zip(a.matrices, b.matrices):
            np.testing.assert_array_equal(m1.entries, m2.entries)
        c = build_ensemble(100, 10, 0.5, 0.1, seed=4, k_override=4)
        assert not np.array_equal(a.stacked, c.stacked)

    def test_matrix_rebuilt_from_seed(self):
        ens = build_ensemble(10, 5, 0.5, 0.1, seed=9, k_override=2)
        m = ens.matrices[1]
        np.testing.assert_array_equal(JlMatrix(m.s, m.d, m.seed).entries, m.entries)
        expected = make_rng(m.seed, 0x4A4C).standard_normal((m.s, m.d)) / math.sqrt(m.s)
        np.testing.assert_array_equal(m.entries, expected)

    def test_json_roundtrip(self):
        ens = build_ensemble(100, 10, 0.5, 0.1, seed=5, k_override=3)
        back = SketchEnsemble.from_json(ens.to_json())
        assert back == ens
        np.testing.assert_array_equal(back.stacked, ens.stacked)
        assert "entries" not in ens.to_json()

    @pytest.mark.parametrize("kw", [dict(n=0), dict(d=0), dict(epsilon=0.0), dict(epsilon=1.0),
                                    dict(delta=1.5), dict(k_override=0)])
    def test_config_errors(self, kw):
        args = dict(n=10, d=5, epsilon=0.5, delta=0.1, seed=0)
        args.update(kw)
        with pytest.raises(ConfigError):
            build_ensemble(**args)

    def test_frobenius_flag(self):
        m = JlMatrix(4, 100, 1)
        # |S|_F^2 concentrates at d = 100, so |S|_F ~ 10 < d
        assert not m.frobenius_flag
        assert abs(m.frobenius - 10) < 3


class TestProjection:
    def test_zero_point(self):
        ens = build_ensemble(10, 6, 0.5, 0.1, seed=0, k_override=3)
        for y in project_batch(ens, np.zeros((2, 6))):
            np.testing.assert_array_equal(y, 0.0)

    def test_batch_bit_identical(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((20, 8))
        ens = build_ensemble(20, 8, 0.5, 0.1, seed=2, k_override=5)
        batch = project_batch(ens, x)
        for j in range(ens.k):
            for i in range(20):
                np.testing.assert_array_equal(batch[j][i], ens.project(x[i], j))
            np.testing.assert_array_equal(ens.project_all(x[3])[j], batch[j][3])

    def test_dimension_error(self):
        ens = build_ensemble(10, 6, 0.5, 0.1, seed=0, k_override=1)
        with pytest.raises(DimensionError):
            project_batch(ens, np.zeros((2, 5)))

    def test_norm_statistics(self):
        rng = np.random.default_rng(1)
        x = unit_rows(rng, 50, 30)
        ens = build_ensemble(50, 30, 0.5, 0.1, seed=1, k_override=40, s_override=64)
        ratios = np.array([np.sum(y**2, axis=1) for y in project_batch(ens, x)])
        assert abs(ratios.mean() - 1.0) <= 0.05

    def test_linearity(self):
        rng = np.random.default_rng(2)
        x, y = rng.standard_normal((2, 12))
        ens = build_ensemble(10, 12, 0.5, 0.1, seed=3, k_override=3)
        for j in range(3):
            np.testing.assert_allclose(ens.project(2.5 * x - 0.7 * y, j),
                                       2.5 * ens.project(x, j) - 0.7 * ens.project(y, j), atol=1e-9)

    def test_distortion_at_calibrated_size(self):
        # the pilot target: n=500, d=64, eps=0.2, delta=0.05
        rng = np.random.default_rng(3)
        x = unit_rows(rng, 100, 64)
        ens = build_ensemble(500, 64, 0.2, 0.05, seed=11, k_override=50)
        err = np.array([np.abs(np.sum(y**2, axis=1) - 1) for y in project_batch(ens, x)])
        assert (err <= 0.2).mean() >= 0.95


class TestGoodFraction:
    def test_coincident_pair_preserved(self):
        rng = np.random.default_rng(4)
        pts = unit_rows(rng, 10, 8)
        ens = build_ensemble(10, 8, 0.5, 0.1, seed=0, k_override=6, s_override=4)
        mask = preserved_mask(ens, pts[3], pts, 0.01)
        assert mask[:, 3].all()

    def test_eps_one_is_always_one(self):
        # with eps = 1 the only constraint is |S u|^2 <= 2 |u|^2, i.e. chi2_s / s <= 2
        rng = np.random.default_rng(5)
        pts = unit_rows(rng, 200, 50)
        ens = build_ensemble(200, 50, 0.5, 0.1, seed=5, k_override=64, s_override=64)
        for q in unit_rows(rng, 5, 50):
            assert good_fraction(ens, q, pts, 1.0) == 1.0

    def test_all_mode_not_larger(self):
        rng = np.random.default_rng(6)
        pts = unit_rows(rng, 50, 20)
        ens = build_ensemble(50, 20, 0.5, 0.1, seed=6, k_override=16, s_override=32)
        q = unit_rows(rng, 1, 20)[0]
        assert good_fraction(ens, q, pts, 0.3, require_all=True) <= good_fraction(ens, q, pts, 0.3)

    def test_inner_product_transfer(self):
        rng = np.random.default_rng(7)
        eps = 0.2
        x = unit_rows(rng, 100, 16)
        q = unit_rows(rng, 1, 16)[0]
        ens = build_ensemble(100, 16, 0.5, 0.1, seed=7, k_override=10, s_override=40)
        mask = preserved_mask(ens, q, x, eps, alpha=0.0)
        for j, y in enumerate(project_batch(ens, x)):
            w = 1 - 0.5 * np.sum((y - ens.project(q, j)) ** 2, axis=1)
            ok = envelope_holds(w, x @ q, eps)
            assert ok[mask[j]].all()


class TestSampling:
    def test_single_matrix(self):
        ens = build_ensemble(10, 4, 0.5, 0.1, seed=0, k_override=1)
        assert (sample_matrices(ens, 50, make_rng(1)) == 0).all()

    def test_planner_default(self):
        C_l = load_constants().C_l
        assert plan_sample_count(1000, 0.01) == max(1, math.ceil(C_l * math.log(1000 / 0.01)))

    def test_determinism_and_range(self):
        ens = build_ensemble(10, 4, 0.5, 0.1, seed=0, k_override=7)
        a = sample_matrices(ens, 100, make_rng(3, 1))
        b = sample_matrices(ens, 100, make_rng(3, 1))
        np.testing.assert_array_equal(a, b)
        assert a.min() >= 0 and a.max() < 7
        with pytest.raises(ConfigError):
            sample_matrices(ens, 0, make_rng(0))

    def test_chi_square_uniform(self):
        ens = build_ensemble(10, 4, 0.5, 0.1, seed=0, k_override=10)
        draws = sample_matrices(ens, 10_000, make_rng(42))
        counts = np.bincount(draws, minlength=10)
        assert stats.chisquare(counts).pvalue > 0.001
