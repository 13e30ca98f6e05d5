import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fwmips._rng import derive_seed, make_rng
from fwmips.calibration import load_constants
from fwmips.errors import ConfigError, NormError
from fwmips.geometry import transform_unit_data, transform_unit_query
from fwmips.lsh import LshParams, build, default_K, maxip_to_ann_params
from fwmips.lsh_jl import (
    RobustMaxipParams,
    RobustQueryStats,
    build_robust,
    plan_kappa,
    quantize_query,
)


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


class TestParams:
    def test_lambda_tilde_and_threshold(self):
        p = RobustMaxipParams(epsilon=0.2, delta=0.1, c=0.8, tau=0.6, lam=0.01, alpha=1e-9, C_lambda=4.0)
        lt = 4.0 * math.sqrt((1 - 0.48) / 0.4) * (0.01 + 1e-9)
        assert p.lambda_tilde == pytest.approx(lt, rel=1e-12)
        assert p.threshold == pytest.approx(0.8 * 0.48 - lt, rel=1e-12)

    def test_default_C_lambda(self):
        assert load_constants().C_lambda == 4.0

    def test_kappa(self):
        assert plan_kappa(100, 2, 0.5, 0.5, cap=1000) == math.ceil(2 * math.log(100 * 2 / 0.25))
        assert plan_kappa(100, 50, 0.01, 0.01) == 16

    @pytest.mark.parametrize("kw", [dict(epsilon=0), dict(c=1.0), dict(tau=1.2), dict(lam=0.0),
                                    dict(kappa=0), dict(l=0), dict(alpha=-1.0), dict(L=0)])
    def test_config_errors(self, kw):
        with pytest.raises(ConfigError):
            RobustMaxipParams(**kw)


class TestQuantize:
    def test_coarse_grid(self):
        q = np.array([0.3, -0.2, 0.1])
        lam = 2 * np.abs(q).max() * math.sqrt(3) + 1e-9
        np.testing.assert_array_equal(quantize_query(q, lam), 0.0)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, 7, elements=st.floats(-3, 3)), st.floats(1e-4, 1.0))
    def test_idempotent_and_bounded(self, q, lam):
        q1 = quantize_query(q, lam)
        np.testing.assert_array_equal(quantize_query(q1, lam), q1)
        assert np.linalg.norm(q1 - q) <= lam / 2 + 1e-12

    def test_error_over_random_queries(self):
        rng = np.random.default_rng(0)
        errs = [np.linalg.norm(quantize_query(q, 0.05) - q) for q in unit_rows(rng, 1000, 30)]
        assert max(errs) <= 0.025

    def test_bad_lambda(self):
        with pytest.raises(ConfigError):
            quantize_query([1.0], 0.0)


class TestIndex:
    def test_degenerate_matches_plain_lsh(self):
        rng = np.random.default_rng(1)
        x = unit_rows(rng, 80, 10)
        p = RobustMaxipParams(epsilon=0.1, delta=0.1, c=0.9, tau=0.5, lam=1e-9, kappa=1, l=1, k_jl=1, s=10, L=3)
        idx = build_robust(x, p, seed=5)
        S = idx.ensemble.matrices[0].entries
        y = np.einsum("nd,sd->ns", x, S)
        R = np.linalg.norm(y, axis=1).max()
        c_bar, r = maxip_to_ann_params(0.9, 0.5)
        plain = build(transform_unit_data(y, R), LshParams(default_K(80), 3, c_bar, r, derive_seed(5, 0x5355, 0, 0)))
        for q in unit_rows(rng, 20, 10):
            qs = quantize_query(np.einsum("d,sd->s", q, S), 1e-9)
            lifted = transform_unit_query(qs, np.linalg.norm(qs))
            np.testing.assert_array_equal(idx.sub_indexes[0][0].candidates(idx.sketch_query(q, 0)),
                                          plain.candidates(lifted))

    def test_self_query_recall(self):
        rng = np.random.default_rng(2)
        x = unit_rows(rng, 200, 20)
        p = RobustMaxipParams(epsilon=0.2, delta=0.05, c=0.9, tau=0.9, k_jl=4)
        hits = 0
        for seed in range(100):
            idx = build_robust(x, p, seed=seed)
            j = seed % 200
            res = idx.query_max_robust(x[j], make_rng(seed, 1))
            hits += res is not None and res[0] == j
        assert hits >= 95

    def test_memory_accounting(self):
        x = unit_rows(np.random.default_rng(3), 300, 16)
        p = RobustMaxipParams(k_jl=5, kappa=3, L=2)
        idx = build_robust(x, p, seed=0)
        K = default_K(300)
        per_table = 2 * 8 * 300 + 8 * K * (idx.ensemble.s + 2)
        expected = 5 * 3 * 2 * per_table
        assert abs(idx.nbytes - expected) <= 0.1 * expected

    def test_rejects_non_unit(self):
        with pytest.raises(NormError):
            build_robust(np.ones((3, 4)), RobustMaxipParams(k_jl=1, kappa=1))
        idx = build_robust(np.eye(4), RobustMaxipParams(k_jl=1, kappa=1))
        with pytest.raises(NormError):
            idx.query_max_robust(np.ones(4), make_rng(0))

    def test_none_below_threshold(self):
        rng = np.random.default_rng(4)
        x = unit_rows(rng, 100, 12)
        idx = build_robust(x, RobustMaxipParams(k_jl=6, kappa=2, c=0.9, tau=0.95, epsilon=0.01), seed=1)
        for q in unit_rows(rng, 30, 12):
            if (x @ q).max() < idx.params.threshold:
                assert idx.query_max_robust(q, make_rng(0)) is None

    def test_one_sided(self):
        rng = np.random.default_rng(5)
        x = unit_rows(rng, 150, 12)
        idx = build_robust(x, RobustMaxipParams(k_jl=8, kappa=2, tau=0.3), seed=2)
        for i, q in enumerate(unit_rows(rng, 100, 12)):
            for thr in (None, 0.1, 0.4):
                res = idx.query_max_robust(q, make_rng(i), threshold=thr)
                if res is not None:
                    bound = idx.params.threshold if thr is None else thr
                    assert x[res[0]] @ q >= bound
                    assert res[1] == pytest.approx(x[res[0]] @ q)

    def test_quantization_stability(self):
        rng = np.random.default_rng(6)
        x = unit_rows(rng, 100, 12)
        idx = build_robust(x, RobustMaxipParams(k_jl=8, kappa=2, tau=0.3, lam=0.2), seed=3)
        agree = 0
        for q in unit_rows(rng, 40, 12):
            q2 = q + 1e-7 * rng.standard_normal(12)
            q2 /= np.linalg.norm(q2)
            if all(np.array_equal(idx.sketch_query(q, i), idx.sketch_query(q2, i)) for i in range(8)):
                agree += 1
                a = RobustQueryStats()
                b = RobustQueryStats()
                ra = idx.query_max_robust(q, make_rng(9), stats=a)
                rb = idx.query_max_robust(q2, make_rng(9), stats=b)
                assert (ra is None) == (rb is None)
                if ra is not None:
                    assert ra[0] == rb[0]
                assert a.candidates == b.candidates and a.subindexes_probed == b.subindexes_probed
        assert agree >= 30

    def test_determinism_and_stats(self):
        rng = np.random.default_rng(7)
        x = unit_rows(rng, 100, 12)
        p = RobustMaxipParams(k_jl=6, kappa=2)
        a, b = build_robust(x, p, seed=4), build_robust(x, p, seed=4)
        st_ = RobustQueryStats()
        ra = a.query_max_robust(x[3], make_rng(1), stats=st_)
        assert ra == b.query_max_robust(x[3], make_rng(1))
        assert st_.sketches_sampled >= 1 and st_.subindexes_probed >= 1
        assert st_.sketch_madds == st_.sketches_sampled * a.ensemble.s * 12
        assert st_.success == (ra is not None)

    def test_adaptive_stress(self):
        # each query is aimed at the successor of the previous answer and
        # carries that answer's residual
        rng = np.random.default_rng(8)
        x = unit_rows(rng, 500, 32)
        idx = build_robust(x, RobustMaxipParams(), seed=11)
        q = x[0].copy()
        qrng = make_rng(11, 2)
        ok = 0
        for _ in range(50):
            res = idx.query_max_robust(q, qrng)
            ok += res is not None
            j = res[0] if res is not None else int(np.argmax(x @ q))
            resid = q - (q @ x[j]) * x[j]
            nxt = 0.9 * x[(j + 1) % 500] + 0.45 * resid / max(np.linalg.norm(resid), 1e-12)
            q = nxt / np.linalg.norm(nxt)
        assert ok / 50 >= 0.9
