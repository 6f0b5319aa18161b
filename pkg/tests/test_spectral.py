import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rmsimplicity.checks import deterministic_suite
from rmsimplicity.jacobi import jacobi_singular_values
from rmsimplicity.rng import stream
from rmsimplicity.spectral import (
    RankDeficientError,
    SpectralSummary,
    block_singular_check,
    curly_block_balance_check,
    delocalization_profile,
    dist_col_to_span,
    eigenvector_overlap_check,
    interlacing_check,
    joint_delocalization_count,
    min_gap,
    normal_vector,
    overlap_beta,
    real_eigen_count,
    real_eigenvalues,
    schur_eigenvalues,
    sigma_min_shifted,
    summarize,
    svd_values,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def _rad(rng, *shape):
    return 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0


@pytest.mark.parametrize("a, expected", [(np.eye(3), [1, 1, 1]), (np.diag([3.0, -1.0]), [3, 1])])
def test_svd_examples(a, expected):
    np.testing.assert_allclose(svd_values(a), expected, rtol=1e-15)


@pytest.mark.parametrize("method", ["jacobi", "lapack"])
def test_svd_matches_gram_oracle(method):
    # the oracle resolves sigma^2 to eps * sigma_1^2, so compare squares
    a = _rad(stream(1, "gram"), 6, 4)
    gram = np.sort(np.linalg.eigvalsh(a.T @ a))[::-1]
    s = svd_values(a, method)
    assert np.max(np.abs(s**2 - gram)) <= 1e-10 * s[0] ** 2


def test_svd_rejects_nonfinite():
    with pytest.raises(ValueError):
        svd_values(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_jacobi_small_singular_value_relative_accuracy():
    # graded matrix: LAPACK's error is relative to sigma_1, Jacobi's to each value
    d = np.diag(10.0 ** -np.arange(0, 14, 2.0))
    q1, _ = np.linalg.qr(stream(2, "q").standard_normal((7, 7)))
    a = d @ q1
    s = jacobi_singular_values(a)
    np.testing.assert_allclose(s, np.diag(d), rtol=1e-9)


def test_jacobi_complex():
    rng = stream(3, "cx")
    a = rng.standard_normal((9, 6)) + 1j * rng.standard_normal((9, 6))
    np.testing.assert_allclose(jacobi_singular_values(a), np.linalg.svd(a, compute_uv=False), rtol=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=finite))
def test_svd_transpose_invariance(a):
    s, t = svd_values(a), svd_values(a.T)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    np.testing.assert_allclose(s, t, rtol=1e-12, atol=1e-12 * max(s[0], 1e-300))


@pytest.mark.parametrize("vals, k, gap", [((3, 2, 2, 1), 2, 0.0), ((5, 3, 2.5, 1), 2, 0.5)])
def test_min_gap_examples(vals, k, gap):
    got = min_gap(vals)
    assert got[:2] == (k, gap)
    assert got[2] == pytest.approx(2 * gap)


def test_min_gap_brute_force_at_50():
    s = svd_values(_rad(stream(4, "gap"), 50, 50))
    pairs = [(s[i] - s[i + 1], i + 1) for i in range(49)]
    best = min(pairs)
    assert min_gap(s)[:2] == (best[1], best[0])


def test_min_gap_needs_two_values():
    with pytest.raises(ValueError):
        min_gap([1.0])


@given(arrays(np.float64, st.tuples(st.integers(2, 7), st.integers(2, 7)), elements=finite),
       st.floats(0.01, 100))
def test_min_gap_index_scale_invariant(a, c):
    s = svd_values(a)
    k, g, _ = min_gap(s)
    k2, g2, _ = min_gap(svd_values(c * a))
    gaps = s[:-1] - s[1:]
    # ties within rounding may flip the argmin; then the gaps must coincide
    assert k2 == k or abs(gaps[k2 - 1] - gaps[k - 1]) <= 1e-9 * max(s[0], 1e-300)


@pytest.mark.parametrize("a, lam, expected", [(np.eye(3), 1.0, 0.0), (np.diag([2.0, 5.0]), 1.0, 1.0)])
def test_sigma_min_shifted_examples(a, lam, expected):
    assert sigma_min_shifted(a, lam) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("n", range(2, 9))
def test_sigma_min_is_inverse_norm(n):
    a = stream(5, "inv", n).standard_normal((n, n))
    assert sigma_min_shifted(a, 0.0) == pytest.approx(1.0 / np.linalg.norm(np.linalg.inv(a), 2), rel=1e-10)


def _companion(coeffs):
    n = len(coeffs) - 1
    c = np.zeros((n, n))
    c[1:, :-1] = np.eye(n - 1)
    c[:, -1] = -np.asarray(coeffs[::-1][:-1]) / coeffs[0]
    return c


@pytest.mark.parametrize("a, count", [
    (np.diag([1.0, 2.0, 3.0]), 3),
    (np.array([[0.0, -1.0], [1.0, 0.0]]), 0),
    (_companion(np.polymul([1, 0, 1], [1, -2])), 1),
])
def test_real_eigen_count_examples(a, count):
    assert real_eigen_count(a) == count


def test_companion_real_root_is_two():
    np.testing.assert_allclose(real_eigenvalues(_companion(np.polymul([1, 0, 1], [1, -2]))), [2.0], rtol=1e-12)


@given(st.integers(1, 20), st.integers(0, 2**32))
def test_real_count_parity_and_pairing(n, seed):
    a = _rad(stream(seed, "parity"), n, n)
    ev = schur_eigenvalues(a)
    nr = real_eigen_count(a)
    nonreal = ev[np.abs(ev.imag) > 1e-9 * np.sqrt(n)]
    assert nr + nonreal.size == n and (n - nr) % 2 == 0
    np.testing.assert_allclose(np.sort_complex(nonreal), np.sort_complex(nonreal.conj()), atol=1e-12)


def test_normal_vector_diag_example():
    v = normal_vector(np.diag([2.0, 3.0]), 0.0, 1)
    np.testing.assert_array_equal(v, [1.0, 0.0])


def test_normal_vector_orthogonal_columns():
    q, _ = np.linalg.qr(stream(6, "orth").standard_normal((3, 3)))
    v = normal_vector(q, 0.0, 2)
    col = q[:, 1] * np.sign(q[np.argmax(np.abs(q[:, 1])), 1])
    np.testing.assert_allclose(v, col, atol=1e-12)


@given(st.integers(2, 10), st.integers(0, 2**32), st.floats(-3, 3), st.data())
def test_normal_vector_residual_and_distance(n, seed, lam, data):
    a = stream(seed, "nv").standard_normal((n, n))
    j = data.draw(st.integers(1, n))
    v = normal_vector(a, lam, j)
    b = a - lam * np.eye(n)
    others = np.delete(b, j - 1, axis=1)
    assert abs(np.linalg.norm(v) - 1) <= 1e-12
    assert np.max(np.abs(others.T @ v)) <= 1e-10 * max(1.0, np.abs(b).max())
    # least-squares projection oracle
    coef, *_ = np.linalg.lstsq(others, b[:, j - 1], rcond=None)
    resid = np.linalg.norm(b[:, j - 1] - others @ coef)
    assert dist_col_to_span(a, lam, j) == pytest.approx(resid, rel=1e-8, abs=1e-12)


def test_normal_vector_rank_deficient():
    a = np.ones((3, 3))
    with pytest.raises(RankDeficientError, match="rank"):
        normal_vector(a, 0.0, 1)


def test_overlap_identical_and_orthogonal():
    a = stream(7, "ov").standard_normal((5, 5))
    alpha, beta = overlap_beta(a, 0.3, 0.3, 2)
    assert abs(alpha) == pytest.approx(1.0, abs=1e-12) and beta <= 1e-6
    # n = 2, j = 1: the second column is (1, 1) at lam = 0 and (1, -1) at lam = 2
    b = np.array([[0.0, 1.0], [0.0, 1.0]])
    alpha, beta = overlap_beta(b, 0.0, 2.0, 1)
    assert alpha == pytest.approx(0.0, abs=1e-15) and beta == pytest.approx(1.0)


@given(st.integers(2, 8), st.integers(0, 2**32), st.floats(-2, 2), st.floats(-2, 2))
def test_overlap_pythagoras(n, seed, l1, l2):
    a = stream(seed, "beta").standard_normal((n, n))
    alpha, beta = overlap_beta(a, l1, l2, 1)
    assert abs(alpha**2 + beta**2 - 1) <= 1e-12 and beta >= 0


def test_overlap_positive_at_n40():
    betas = []
    for i in range(50):
        a = _rad(stream(8, "b40", i), 40, 40)
        betas.append(overlap_beta(a, 0.0, np.sqrt(40), 1)[1])
    assert min(betas) > 0


def test_interlacing_examples():
    assert interlacing_check(np.diag([1.0, 2.0, 3.0]), 2) <= 0
    a = stream(9, "il").standard_normal((4, 4))
    la = np.block([[np.zeros((4, 4)), a], [a.T, np.zeros((4, 4))]])
    assert max(interlacing_check(la, j) for j in range(1, 9)) <= 1e-10


def test_interlacing_rejects_asymmetric():
    with pytest.raises(ValueError):
        interlacing_check(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)


@pytest.mark.parametrize("n", range(2, 11))
def test_eigenvector_overlap_all_pairs(n):
    m = stream(10, "f22", n).standard_normal((n, n))
    m = m + m.T
    assert max(eigenvector_overlap_check(m, j) for j in range(1, n + 1)) <= 1e-9


@given(st.integers(1, 12), st.integers(0, 2**32))
def test_block_identity_property(n, seed):
    a = stream(seed, "blk").standard_normal((n, n))
    assert block_singular_check(a) <= 1e-10 * max(1.0, np.linalg.norm(a, 2))


@given(st.integers(2, 12), st.integers(0, 2**32))
def test_curly_balance_property(n, seed):
    a = stream(seed, "curly").standard_normal((n - 1, n))
    assert curly_block_balance_check(a) <= 1e-8


def test_deterministic_suite_clean():
    worst = deterministic_suite(instances=200, n_max=12, seed=0)
    assert all(v <= 1e-9 for v in worst.values()), worst


def test_delocalization_forced_vectors():
    n = 16
    _, counts = delocalization_profile(None, thetas=[0.5, 1.0], w=np.full(n, n**-0.5))
    assert list(counts) == [n, n]
    _, counts = delocalization_profile(None, thetas=[1.0, 4.0], w=np.eye(n)[0])
    assert list(counts) == [1, 1]
    _, counts = delocalization_profile(None, thetas=[4.01], w=np.eye(n)[0])
    assert list(counts) == [0]


def test_delocalization_profile_random():
    a = _rad(stream(11, "dl"), 100, 100)
    w, counts = delocalization_profile(a, 0.0, thetas=[0.05, 0.5, 2.0])
    assert abs(np.linalg.norm(w) - 1) < 1e-12
    assert counts[0] >= counts[1] >= counts[2]
    assert np.linalg.norm(a @ w) == pytest.approx(svd_values(a)[-1], rel=1e-8)


def test_joint_count():
    w1 = np.array([0.5, 0.5, 0.5, 0.5])
    w2 = np.array([0.5, 0.5, 0.0, 1.0])
    assert joint_delocalization_count(w1, w2, 0.5, 1.5) == 2


def test_summary_invariants_and_csv():
    a = _rad(stream(12, "sum"), 7, 7)
    summary, k = summarize(a)
    s = summary.singular_values
    assert np.all(np.diff(s) <= 0) and summary.min_gap_scaled >= 0
    assert summary.real_eig_count % 2 == 1
    row = summary.csv_row(a.shape, k)
    assert tuple(row) == SpectralSummary.CSV_FIELDS
    assert tuple(SpectralSummary.CSV_FIELDS) == (
        "n_rows", "n_cols", "op_norm", "sigma_min", "min_gap_scaled", "gap_index", "real_eig_count")
