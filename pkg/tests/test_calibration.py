import json

import numpy as np
import pytest

from fwmips.aipe import plan_pool_size, plan_subset_size
from fwmips.calibration import (Constants, calibrate_C_l, calibrate_C_s, calibrate_lsh,
                                constants_path, load_constants)
from fwmips.lsh import default_K
from fwmips.sketch import plan_sample_count, plan_sketch_dim


@pytest.fixture(scope="module")
def committed():
    path = constants_path()
    assert path.exists(), "calibration.json must ship with the package"
    return json.loads(path.read_text())


def test_keys_present(committed):
    for key in Constants.__dataclass_fields__:
        assert key in committed
    assert committed["K"] is None or committed["K"] >= 1
    assert committed["L"] >= 1


def test_loader_matches_file(committed):
    c = load_constants()
    for key in Constants.__dataclass_fields__:
        assert getattr(c, key) == committed[key]


def test_planners_reproduce_pilot(committed):
    pilot = committed["pilot"]
    assert plan_sketch_dim(500, 0.2, 0.05) == pilot["jl_s"]
    assert plan_sample_count(200, 0.05) == pilot["sample_count"]
    assert plan_pool_size(500, 100, 0.01) == pilot["aipe_k"]
    assert plan_subset_size(500, 100, 0.01, pilot["aipe_k"]) == pilot["aipe_m"]
    assert default_K(1000) == 10


def test_jl_sweep_reproducible(committed):
    C_s, s = calibrate_C_s(seed=committed["pilot"]["seed"])
    assert s == committed["pilot"]["jl_s"]
    np.testing.assert_allclose(C_s, committed["C_s"], atol=5e-5)


def test_sample_count_sweep_reproducible(committed):
    C_l, l, g = calibrate_C_l(committed["C_s"], seed=committed["pilot"]["seed"])
    assert l == committed["pilot"]["sample_count"]
    np.testing.assert_allclose(C_l, committed["C_l"], atol=5e-5)
    assert g == committed["pilot"]["min_good_fraction"]


def test_missing_file_falls_back(tmp_path):
    assert load_constants(tmp_path / "absent.json") == Constants()


def test_lsh_sweep_reproducible(committed):
    assert calibrate_lsh(seed=committed["pilot"]["seed"]) == committed["L"]
