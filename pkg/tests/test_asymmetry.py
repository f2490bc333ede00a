import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asymcity.asymmetry import (OriginStats, distance_matrix, global_asymmetry, origin_divergence,
                                origin_stats_from, project_2d)
from asymcity.errors import DomainError


def stats(mu):
    mu = np.asarray(mu, dtype=float)
    return OriginStats(mu, np.ones(len(mu), dtype=int))


def brute_divergence(mu):
    total = 0.0
    for row in mu:
        m = sum(row) / len(row)
        total += sum((v - m) ** 2 for v in row) / len(row)
    return total


def brute_matrix(mu):
    K = len(mu)
    return [[math.dist(mu[i], mu[j]) for j in range(K)] for i in range(K)]


def brute_global(mu):
    pairs = list(itertools.permutations(range(len(mu)), 2))
    return sum(math.dist(mu[i], mu[j]) for i, j in pairs) / len(pairs)


def test_two_origin_case():
    s = stats([[0.0, 0.0], [3.0, 4.0]])
    assert global_asymmetry(s) == 5.0
    assert distance_matrix(s).tolist() == [[0.0, 5.0], [5.0, 0.0]]


def test_single_origin():
    s = stats([[1.0, 2.0, 3.0]])
    assert distance_matrix(s).tolist() == [[0.0]]
    with pytest.raises(DomainError):
        global_asymmetry(s)


def test_divergence_cases():
    assert origin_divergence(stats([[4.0, 4.0, 4.0], [-1.0, -1.0, -1.0]])) == 0.0
    assert origin_divergence(stats([[0.0, 2.0]])) == 1.0
    with pytest.raises(DomainError):
        origin_divergence(stats([[0.0, 2.0]]), "bogus")


def test_across_origins_reading():
    mu = np.array([[0.0, 1.0], [2.0, 5.0]])
    assert origin_divergence(stats(mu), "across_origins") == pytest.approx(1.0 + 4.0, abs=1e-15)


def test_metrics_match_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(50):
        K, d = int(rng.integers(2, 9)), int(rng.integers(2, 12))
        mu = rng.normal(scale=2, size=(K, d))
        s, ml = stats(mu), mu.tolist()
        assert origin_divergence(s) == pytest.approx(brute_divergence(ml), abs=1e-9)
        assert global_asymmetry(s) == pytest.approx(brute_global(ml), abs=1e-9)
        np.testing.assert_allclose(distance_matrix(s), brute_matrix(ml), rtol=0, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_matrix_properties(K, d, seed):
    mu = np.random.default_rng(seed).normal(size=(K, d))
    M = distance_matrix(stats(mu))
    assert np.array_equal(M, M.T)
    assert np.all(np.diag(M) == 0)
    assert M[~np.eye(K, dtype=bool)].mean() == pytest.approx(global_asymmetry(stats(mu)), abs=1e-12)
    for i, j, k in itertools.permutations(range(K), 3):
        assert M[i, k] <= M[i, j] + M[j, k] + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_invariances(K, d, seed):
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=(K, d))
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    base = stats(mu)
    assert global_asymmetry(stats(mu @ Q)) == pytest.approx(global_asymmetry(base), abs=1e-9)
    perm = rng.permutation(d)
    assert origin_divergence(stats(mu[:, perm])) == pytest.approx(origin_divergence(base), abs=1e-12)
    # a constant added to every component leaves each row's spread alone
    assert origin_divergence(stats(mu + 3.7)) == pytest.approx(origin_divergence(base), abs=1e-9)
    shift = rng.normal(size=d)
    assert global_asymmetry(stats(mu + shift)) == pytest.approx(global_asymmetry(base), abs=1e-9)
    np.testing.assert_allclose(distance_matrix(stats(mu + shift)), distance_matrix(base), atol=1e-9)


def test_origin_means():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(9, 3))
    k = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2])
    s = origin_stats_from(z, k)
    for kk in range(3):
        rows = z[k == kk].tolist()
        brute = [sum(r[c] for r in rows) / len(rows) for c in range(3)]
        np.testing.assert_allclose(s.mu_specific[kk], brute, atol=1e-12)
    assert s.counts.tolist() == [3, 3, 3]
    doubled = origin_stats_from(np.vstack([z, z]), np.concatenate([k, k]))
    np.testing.assert_allclose(doubled.mu_specific, s.mu_specific, atol=1e-12)
    with pytest.raises(DomainError):
        origin_stats_from(z, k, K=4)


def power_top_eigs(C, n=2, iters=3000):
    """Independent oracle: deflated power iteration."""
    C = C.copy()
    vals = []
    v0 = np.linspace(1.0, 2.0, len(C))
    for _ in range(n):
        v = v0 / np.linalg.norm(v0)
        for _ in range(iters):
            w = C @ v
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            v = w / nw
        lam = float(v @ C @ v)
        vals.append(lam)
        C = C - lam * np.outer(v, v)
    return vals


def test_pca_rank_two_preserves_distances():
    rng = np.random.default_rng(1)
    latent = rng.normal(size=(30, 2)) * [5.0, 1.0]
    basis, _ = np.linalg.qr(rng.normal(size=(6, 2)))
    Y = latent @ basis.T + rng.normal(size=6)
    P = project_2d(Y)
    for i, j in itertools.combinations(range(30), 2):
        assert np.linalg.norm(P[i] - P[j]) == pytest.approx(np.linalg.norm(Y[i] - Y[j]), abs=1e-9)


def test_pca_duplicated_points_and_determinism():
    Y = np.random.default_rng(2).normal(size=(20, 5))
    P = project_2d(Y)
    assert np.array_equal(P, project_2d(Y.copy()))
    np.testing.assert_allclose(project_2d(np.vstack([Y, Y]))[:20], P, atol=1e-9)


def test_pca_variance_matches_top_eigenvalues():
    rng = np.random.default_rng(4)
    Y = rng.normal(size=(60, 5)) * [4.0, 2.5, 1.0, 0.5, 0.2]
    P = project_2d(Y)
    Yc = Y - Y.mean(axis=0)
    top = power_top_eigs(Yc.T @ Yc / len(Y))
    np.testing.assert_allclose(P.var(axis=0), top, rtol=1e-9)


def test_pca_rank_zero():
    with pytest.raises(DomainError):
        project_2d(np.ones((5, 3)))
