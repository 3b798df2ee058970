"""Block coordinate ascent fitting: anchors, invariants, and error paths."""

import numpy as np
import pytest

from admgfit.fitting import (
    FitError,
    FitOptions,
    fit,
    fit_districts_parallel,
    initialize,
    loglik,
    update_vertex,
    vertex_block,
)
from admgfit.graph import Admg
from admgfit.moebius import enumerate_params, prob_vector

from util import (
    dag_loglik_closed_form,
    graph_one,
    graph_two,
    random_admg,
    random_interior_q,
)


def random_counts(rng, k, low=1, high=60):
    return rng.integers(low, high, size=1 << k).astype(float)


def test_count_vector_validation():
    g = graph_two()
    with pytest.raises(FitError, match="length 8"):
        fit(g, np.ones(4))
    with pytest.raises(FitError, match="finite and nonnegative"):
        fit(g, [1, 2, 3, 4, 5, 6, 7, -1])
    with pytest.raises(FitError, match="finite and nonnegative"):
        fit(g, [1, 2, 3, 4, 5, 6, 7, np.nan])
    with pytest.raises(FitError, match="sum to zero"):
        fit(g, np.zeros(8))


def test_zero_cells_need_explicit_permission():
    g = graph_two()
    counts = np.array([5.0, 4, 3, 2, 1, 2, 3, 0])
    with pytest.raises(FitError, match="allow_zero_counts"):
        fit(g, counts)
    res = fit(g, counts, FitOptions(allow_zero_counts=True))
    assert np.isfinite(res.loglik)
    assert res.p[counts > 0].min() > 0


def test_loglik_minus_infinity_outside_the_simplex():
    g = Admg(["1", "2"], bidirected=[("1", "2")])
    # q[1] - q[1,2] is the probability of (0, 1); make it negative
    q = np.array([0.5, 0.5, 0.6])
    assert loglik(g, q, np.ones(4)) == -np.inf


def test_initialize_is_the_independence_fit():
    rng = np.random.default_rng(11)
    g = graph_one()
    counts = random_counts(rng, 4)
    q0 = initialize(g, counts)
    p0 = prob_vector(g, q0)
    marg = np.empty((4, 2))
    states = [(a, b, c, d) for a in (0, 1) for b in (0, 1)
              for c in (0, 1) for d in (0, 1)]
    for k in range(4):
        for val in (0, 1):
            marg[k, val] = sum(
                c for s, c in zip(states, counts) if s[k] == val
            ) / counts.sum()
    expect = np.array([np.prod([marg[k, s[k]] for k in range(4)]) for s in states])
    assert np.max(np.abs(p0 - expect)) < 1e-12


def test_vertex_block_affine_identity():
    rng = np.random.default_rng(12)
    for _ in range(25):
        g = random_admg(rng, n_max=5)
        q = random_interior_q(g, rng)
        p = prob_vector(g, q)
        for v in g.vertices:
            A, b, idx = vertex_block(g, q, v)
            assert np.max(np.abs(A @ q[idx] - b - p)) < 1e-12
            heads_of_v = [
                j for j, prm in enumerate(enumerate_params(g).params)
                if v in prm.head
            ]
            assert list(idx) == heads_of_v


def test_update_vertex_never_decreases_the_likelihood():
    rng = np.random.default_rng(13)
    for _ in range(20):
        g = random_admg(rng, n_max=5)
        counts = random_counts(rng, len(g.vertices))
        q = random_interior_q(g, rng)
        before = loglik(g, q, counts)
        for v in g.vertices:
            q2 = update_vertex(g, q, v, counts)
            after = loglik(g, q2, counts)
            assert after >= before - 1e-9
            q, before = q2, after


def test_fit_matches_closed_form_on_random_dags():
    rng = np.random.default_rng(14)
    checked = 0
    while checked < 10:
        g = random_admg(rng, n_min=3, n_max=4, p_dir=0.4, p_bi=0.0)
        counts = random_counts(rng, len(g.vertices))
        res = fit(g, counts)
        assert res.converged
        target = dag_loglik_closed_form(g, counts)
        assert abs(res.loglik - target) < 1e-6
        checked += 1


def test_fit_reaches_the_saturated_likelihood():
    rng = np.random.default_rng(15)
    g = Admg(["a", "b", "c"], bidirected=[("a", "b"), ("b", "c"), ("a", "c")])
    assert len(enumerate_params(g)) == 7
    counts = random_counts(rng, 3)
    res = fit(g, counts, FitOptions(tol=1e-12))
    phat = counts / counts.sum()
    saturated = float(counts @ np.log(phat))
    assert abs(res.loglik - saturated) < 1e-8
    assert np.max(np.abs(res.p - phat)) < 1e-6


def test_edgeless_fit_is_the_product_of_margins():
    rng = np.random.default_rng(16)
    g = Admg(["a", "b", "c"])
    counts = random_counts(rng, 3)
    res = fit(g, counts)
    q0 = initialize(g, counts)
    assert abs(res.loglik - loglik(g, q0, counts)) < 1e-10
    assert np.max(np.abs(res.p - prob_vector(g, q0))) < 1e-8


def test_fit_result_bookkeeping():
    rng = np.random.default_rng(17)
    g = graph_two()
    counts = random_counts(rng, 3)
    res = fit(g, counts)
    assert res.graph is g
    assert res.n == counts.sum()
    assert res.n_params == len(enumerate_params(g)) == 7
    assert abs(res.p.sum() - 1.0) < 1e-12
    assert abs(loglik(g, res.q, counts) - res.loglik) < 1e-9


def test_restarts_are_reproducible_and_never_worse():
    rng = np.random.default_rng(18)
    g = graph_one()
    counts = random_counts(rng, 4)
    plain = fit(g, counts)
    multi1 = fit(g, counts, FitOptions(starts=4, seed=7))
    multi2 = fit(g, counts, FitOptions(starts=4, seed=7))
    assert np.array_equal(multi1.q, multi2.q)
    assert multi1.loglik >= plain.loglik - 1e-9


def test_warm_start_paths():
    rng = np.random.default_rng(19)
    g = graph_two()
    counts = random_counts(rng, 3)
    with pytest.raises(FitError, match="wrong length"):
        fit(g, counts, start=np.full(3, 0.5))
    res = fit(g, counts)
    warm = fit(g, counts, start=res.q)
    assert warm.loglik >= res.loglik - 1e-9
    assert warm.cycles <= res.cycles
    # an infeasible start is quietly replaced by the independence point
    bad = np.full(len(res.q), 0.9)
    if prob_vector(g, bad).min() <= 0:
        recovered = fit(g, counts, start=bad)
        assert abs(recovered.loglik - res.loglik) < 1e-6


def test_tight_cycle_budget_reports_nonconvergence():
    rng = np.random.default_rng(20)
    g = graph_one()
    counts = random_counts(rng, 4)
    res = fit(g, counts, FitOptions(max_cycles=1, tol=1e-14))
    assert res.cycles == 1
    assert not res.converged
    assert np.isfinite(res.loglik)


def test_parallel_districts_agree_with_joint_fit():
    rng = np.random.default_rng(21)
    for jobs in (1, 3):
        for _ in range(6):
            g = random_admg(rng, n_min=3, n_max=5)
            if len(g.districts()) < 2:
                continue
            counts = random_counts(rng, len(g.vertices))
            a = fit(g, counts, FitOptions(tol=1e-10))
            b = fit_districts_parallel(g, counts, FitOptions(tol=1e-10, jobs=jobs))
            assert abs(a.loglik - b.loglik) < 1e-5
            assert np.max(np.abs(a.p - b.p)) < 1e-4


def test_backend_option_is_validated():
    g = graph_two()
    with pytest.raises(ValueError, match="unknown backend"):
        fit(g, np.ones(8), FitOptions(backend="fortran"))
