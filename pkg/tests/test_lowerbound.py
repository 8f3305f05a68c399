import json
import math

import numpy as np
import pytest

from artifact.lowerbound import (
    PackingError,
    PackingSet,
    build_packing,
    check_packing_conditions,
    export_packing,
    kl_gaussian,
    packing_delta,
    rate_constant,
    sweep_gamma,
    target_cardinality,
)
from artifact.linalg import numerical_rank
from artifact.model import Dimensions, SamplingDistribution, ValidationError, uniform_distribution

D88 = Dimensions(8, 8)


def test_target_cardinality():
    assert target_cardinality(8, 2) == 5
    assert target_cardinality(16, 2) == 17
    assert target_cardinality(9, 1) == 4  # ceil(2^1.125) + 1


def test_reference_instance():
    p = build_packing(D88, 2, 1.0, 1.0, 64, 0.1, seed=0)
    assert p.cardinality >= 5
    assert not p.members[0].any()
    for A in p.members:
        assert numerical_rank(A) <= 2
        assert np.abs(A).max() <= 1.0
    rep = check_packing_conditions(p)
    assert rep["all_pass"]
    assert p.min_hamming >= math.ceil(16 / 8)


def test_bracket_direct_norms():
    p = build_packing(Dimensions(12, 7), 3, 0.5, 2.0, 200, 0.3, seed=4)
    s2 = min(0.5, 2.0) ** 2 * 12**2 * 7 * 3 / 200
    for i in range(p.cardinality):
        for j in range(i + 1, p.cardinality):
            f = float(np.sum((p.members[i] - p.members[j]) ** 2))
            assert 0.3**2 / 16 * s2 * (1 - 1e-12) <= f <= 0.3**2 * s2
    # remainder column (7 = 2*3 + 1) is zero
    assert all(not A[:, 6].any() for A in p.members)


def test_kl_examples():
    pi = uniform_distribution(Dimensions(4, 5))
    assert kl_gaussian(pi, np.zeros((4, 5)), 1.0, 10) == 0.0
    A = np.ones((4, 5))  # ||A||_2^2 = m1 m2 -> ||A||_pi^2 = 1
    assert kl_gaussian(pi, A, 1.0, 100) == pytest.approx(50.0)
    assert kl_gaussian(pi, 2 * A, 1.0, 100) == pytest.approx(4 * 50.0)
    assert kl_gaussian(pi, A, 1.0, 300) == pytest.approx(3 * kl_gaussian(pi, A, 1.0, 100))
    with pytest.raises(ValidationError):
        kl_gaussian(pi, A, 0.0, 100)


def test_trivial_packing_vacuous():
    p = PackingSet(D88, 2, 0.1, 0.1, [np.zeros(D88.shape)], 16, n=64)
    rep = check_packing_conditions(p)
    assert rep["trivial"] and rep["all_pass"]
    assert rep["average_kl"].get("vacuous")


def test_margin_linear_in_gamma():
    m1 = check_packing_conditions(build_packing(D88, 2, 1.0, 1.0, 64, 0.05, seed=2))
    m2 = check_packing_conditions(build_packing(D88, 2, 1.0, 1.0, 64, 0.10, seed=2))
    ratio = m2["spectral_separation"]["margin"] / m1["spectral_separation"]["margin"]
    assert ratio == pytest.approx(2.0, rel=1e-10)


def test_rate_constant_independent_of_n():
    vals = [rate_constant(build_packing(D88, 2, 1.0, 1.0, n, 0.2, seed=1)) for n in (64, 256, 1024)]
    assert min(vals) > 0
    np.testing.assert_allclose(vals, vals[0], rtol=1e-12)


def test_kl_fails_for_large_gamma_then_sweep_finds_pass():
    p = build_packing(D88, 2, 1.0, 1.0, 64, 1.0)
    assert not check_packing_conditions(p)["average_kl"]["pass"]
    packing, rep = sweep_gamma(D88, 2, 1.0, 1.0, 64)
    assert rep["all_pass"] and packing.gamma < 1.0


def test_nonuniform_pi_conditions():
    p = build_packing(D88, 2, 1.0, 1.0, 64, 0.05)
    w = np.random.default_rng(0).uniform(0.5, 1.5, (8, 8))
    pi = SamplingDistribution(D88, w / w.sum())
    rep = check_packing_conditions(p, pi)
    assert rep["l2pi_separation"]["pass"] and rep["spectral_separation"]["pass"]


def test_errors():
    with pytest.raises(PackingError) as exc:
        build_packing(Dimensions(16, 16), 2, 1.0, 1.0, 64, 0.1, max_attempts=3)
    assert exc.value.achieved <= 4
    with pytest.raises(ValidationError, match="m1 >= m2"):
        build_packing(Dimensions(4, 8), 2, 1.0, 1.0, 64, 0.1)
    with pytest.raises(ValidationError, match="M r <= n"):
        build_packing(D88, 2, 1.0, 1.0, 10, 0.1)
    with pytest.raises(ValidationError, match="exceeds"):
        build_packing(D88, 2, 1.0, 0.01, 16, 3.0)
    with pytest.raises(ValidationError):
        check_packing_conditions(build_packing(D88, 1, 1.0, 1.0, 64, 0.1), alpha=0.2)


def test_delta_formula():
    # gamma / sqrt 2 * (sigma ^ a) * sqrt(m1 r / n), tiled exactly
    assert packing_delta(D88, 2, 1.0, 3.0, 64, 0.1) == pytest.approx(0.1 / math.sqrt(2) * math.sqrt(16 / 64))


def test_export(tmp_path):
    p = build_packing(D88, 2, 1.0, 1.0, 64, 0.1)
    rep = check_packing_conditions(p)
    path = export_packing(p, rep, tmp_path / "pk", {"seed": 0})
    manifest = json.loads(path.read_text())
    assert manifest["cardinality"] == 5 and len(manifest["members"]) == 5
    assert (tmp_path / "pk" / manifest["members"][1]).exists()
