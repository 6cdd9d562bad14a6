import itertools
import math

import numpy as np
import pytest
from scipy import stats

from corrinfer.models import ChannelModel, PriorModel
from corrinfer.oracle import (MAX_ENUM_N, OracleError, delta_statistics_check, enumerate_ising,
                              gaussian_exact, run_suite)
from corrinfer.patterns import GeneratorSpec, ProblemInstance, generate


def _brute(inst):
    count, total = 0, np.zeros(inst.N)
    for w in itertools.product((-1.0, 1.0), repeat=inst.N):
        w = np.array(w)
        if np.all(inst.y * (inst.X @ w) > 0):
            count += 1
            total += w
    return count, total / max(count, 1)


@pytest.mark.parametrize("kind,N,p", [("random_orthogonal", 10, 4), ("iid_gaussian", 14, 6),
                                      ("random_orthogonal", 13, 9)])
def test_enumeration_matches_brute_force(kind, N, p):
    inst = generate(GeneratorSpec(kind=kind, N=N, p=p, seed=4))
    e = enumerate_ising(inst)
    count, means = _brute(inst)
    assert e.count == count
    if count:
        np.testing.assert_allclose(e.means, means, atol=1e-12)
        assert abs(e.entropy - math.log(count) / N) < 1e-15


def test_enumeration_independent_of_block_split():
    inst = generate(GeneratorSpec(kind="random_orthogonal", N=16, p=8, seed=1))
    ref = enumerate_ising(inst)
    for blocks in (2, 3, 7):
        e = enumerate_ising(inst, blocks=blocks)
        assert e.count == ref.count
        np.testing.assert_allclose(e.means, ref.means, atol=1e-12)


def test_one_pattern_bisects_the_cube():
    for seed in range(5):
        inst = generate(GeneratorSpec(kind="iid_gaussian", N=16, p=1, seed=seed))
        assert 0.45 <= enumerate_ising(inst).count / 2 ** 16 <= 0.55


def test_no_patterns_counts_everything():
    e = enumerate_ising(ProblemInstance(np.zeros((0, 10)), np.zeros(0)))
    assert e.count == 1024 and abs(e.entropy - math.log(2)) < 1e-15


def test_infeasible_instance():
    X = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    e = enumerate_ising(ProblemInstance(X, np.array([1.0, -1.0])))
    assert e.count == 0 and e.entropy == -math.inf


def test_enumeration_limits():
    with pytest.raises(OracleError):
        enumerate_ising(ProblemInstance(np.zeros((1, MAX_ENUM_N + 1)), np.ones(1)))
    X = np.ones((1, 4)) / 2
    with pytest.raises(OracleError):
        enumerate_ising(ProblemInstance(X, np.ones(1), prior=PriorModel("gaussian", 1.0)))


def test_gaussian_exact_against_dense_formulas():
    rec = (PriorModel("gaussian", 1.5), ChannelModel("gaussian_noise", 0.4))
    inst = generate(GeneratorSpec(kind="iid_gaussian", N=30, p=20, label_mode="teacher",
                                  teacher_prior=rec[0], teacher_channel=rec[1], seed=2), rec)
    mean, lnZ = gaussian_exact(inst)
    C = 0.4 * np.eye(20) + 1.5 * inst.X @ inst.X.T
    assert abs(lnZ - stats.multivariate_normal(np.zeros(20), C).logpdf(inst.y)) < 1e-10
    np.testing.assert_allclose(mean, 1.5 * inst.X.T @ np.linalg.solve(C, inst.y), atol=1e-12)
    with pytest.raises(OracleError):
        gaussian_exact(generate(GeneratorSpec(N=10, p=5)))


@pytest.mark.parametrize("prior,kind", [(PriorModel(), "random_orthogonal"),
                                        (PriorModel("gaussian", 2.0), "iid_gaussian")])
def test_delta_statistics(prior, kind):
    rep = delta_statistics_check(prior, kind, 300, 150, 30, seed=1)
    assert rep["passed"], rep


def test_suite_passes():
    assert run_suite(0)["passed"]
