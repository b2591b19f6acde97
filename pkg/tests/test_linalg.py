import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linear_sum_assignment

from peakgain.linalg import (NotPositiveDefiniteError, cholesky, eigenvalues, expm, kron, kron_power,
                             kron_sum, solve_spd)

RNG = np.random.default_rng(0)
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_kron_identity_factor():
    b = RNG.normal(size=(3, 2))
    assert np.array_equal(kron(np.eye(1), b), b)


def test_kron_hand_expansion():
    out = kron([[1, 2], [3, 4]], [[0, 1], [1, 0]])
    assert out.shape == (4, 4)
    assert np.array_equal(out[:2, :2], [[0, 1], [1, 0]])
    assert np.array_equal(out[:2, 2:], [[0, 2], [2, 0]])
    assert np.array_equal(out[2:, 2:], [[0, 4], [4, 0]])


def test_kron_blocks_match_definition():
    a, b = RNG.normal(size=(2, 3)), RNG.normal(size=(4, 2))
    out = kron(a, b)
    for i in range(2):
        for j in range(3):
            assert np.array_equal(out[4 * i:4 * i + 4, 2 * j:2 * j + 2], a[i, j] * b)


@given(arrays(float, (2, 2), elements=finite), arrays(float, (2, 2), elements=finite),
       arrays(float, (2, 2), elements=finite), arrays(float, (2, 2), elements=finite))
def test_mixed_product(a, b, c, d):
    lhs = kron(a, b) @ kron(c, d)
    rhs = kron(a @ c, b @ d)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * max(1.0, np.abs(rhs).max()))


@given(arrays(float, (2, 3), elements=finite), arrays(float, (3, 2), elements=finite),
       arrays(float, (3, 2), elements=finite))
def test_distributive(a, b, c):
    lhs = kron(a, b + c)
    rhs = kron(a, b) + kron(a, c)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * max(1.0, np.abs(rhs).max()))


def test_three_factor_mixed_product():
    for _ in range(50):
        m = RNG.normal(size=(6, 2, 2))
        lhs = kron(kron(m[0], m[1]), m[2]) @ kron(kron(m[3], m[4]), m[5])
        rhs = kron(kron(m[0] @ m[3], m[1] @ m[4]), m[2] @ m[5])
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.abs(rhs).max())


def test_kron_power():
    a = RNG.normal(size=(2, 2))
    assert np.array_equal(kron_power(a, 0), [[1.0]])
    assert np.array_equal(kron_power(a, 1), a)
    assert kron_power([[2.0]], 3)[0, 0] == 8.0
    assert np.allclose(kron_power(a, 3), np.kron(a, np.kron(a, a)))
    with pytest.raises(ValueError):
        kron_power(a, -1)


def test_kron_sum_square():
    a = np.array([[0.0, 1.0], [-4.0, -4.0]])
    assert np.array_equal(kron_sum(a, 1), a)
    expected = [[0, 1, 1, 0], [-4, -4, 0, 1], [-4, 0, -4, 1], [0, -4, -4, -8]]
    assert np.array_equal(kron_sum(a, 2), expected)
    assert np.allclose(kron_sum(a, 2), np.kron(a, np.eye(2)) + np.kron(np.eye(2), a))


def test_kron_sum_column():
    b1, b2 = 0.7, -1.3
    out = kron_sum([[b1], [b2]], 2)
    assert np.array_equal(out, [[2 * b1, 0], [b2, b1], [b2, b1], [0, 2 * b2]])


def test_kron_sum_degree_three_shape():
    b = RNG.normal(size=(3, 1))
    assert kron_sum(b, 3).shape == (27, 9)
    with pytest.raises(ValueError):
        kron_sum(b, 0)


def test_eigenvalues_examples():
    spec = eigenvalues([[0, 1], [-4, -4]])
    assert np.allclose(spec.eigenvalues, [-2, -2], atol=1e-7)
    assert spec.max_real_part == pytest.approx(-2, abs=1e-7)
    assert np.allclose(eigenvalues(np.eye(2)).eigenvalues, [1, 1])
    assert len(eigenvalues(RNG.normal(size=(5, 5))).eigenvalues) == 5


def test_eigenvalues_match_characteristic_polynomial():
    a = RNG.normal(size=(4, 4))
    roots = np.roots(np.poly(a))
    assert np.allclose(np.sort_complex(roots), eigenvalues(a).sorted(), atol=1e-8)


@pytest.mark.parametrize("n", [2, 3])
def test_kron_sum_spectrum_is_pairwise_sums(n):
    for _ in range(20):
        a = RNG.normal(size=(n, n)) - 2 * np.eye(n)
        lam = eigenvalues(a).eigenvalues
        pairs = np.add.outer(lam, lam).ravel()
        got = eigenvalues(kron_sum(a, 2)).eigenvalues
        # match the two multisets optimally rather than by a tie-sensitive sort
        rows, cols = linear_sum_assignment(np.abs(got[:, None] - pairs[None, :]))
        assert np.max(np.abs(got[rows] - pairs[cols])) <= 1e-8


def test_expm_closed_forms():
    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))
    out = expm(np.diag([-1.0, -100.0]))
    assert np.allclose(out, np.diag([np.exp(-1), np.exp(-100)]), rtol=1e-12, atol=0)
    a = RNG.normal(size=(4, 4))
    assert np.allclose(expm(a) @ expm(-a), np.eye(4), atol=1e-10)


def test_expm_against_taylor_series():
    a = 0.3 * RNG.normal(size=(3, 3))
    term, total = np.eye(3), np.eye(3)
    for k in range(1, 30):
        term = term @ a / k
        total = total + term
    assert np.allclose(expm(a), total, rtol=1e-12, atol=1e-14)


@settings(max_examples=30)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2 ** 31))
def test_expm_semigroup(s, t, seed):
    a = np.random.default_rng(seed).normal(size=(3, 3))
    lhs = expm(a * s) @ expm(a * t)
    rhs = expm(a * (s + t))
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(rhs).max()))


def test_cholesky_examples():
    assert np.array_equal(cholesky(np.eye(3)), np.eye(3))
    assert np.allclose(cholesky([[4.0, 2.0], [2.0, 3.0]]), [[2, 0], [1, np.sqrt(2)]])
    with pytest.raises(NotPositiveDefiniteError) as info:
        cholesky([[1.0, 2.0], [2.0, 1.0]])
    assert info.value.pivot == 2
    with pytest.raises(ValueError):
        cholesky([[1.0, 2.0], [0.0, 1.0]])


def test_cholesky_round_trip():
    for _ in range(20):
        m = RNG.normal(size=(5, 5))
        a = m @ m.T + 0.1 * np.eye(5)
        low = cholesky(a)
        assert np.allclose(low, np.tril(low))
        assert np.max(np.abs(low @ low.T - a)) <= 1e-12 * np.abs(a).max()


def test_solve_spd():
    b = RNG.normal(size=(3, 2))
    assert np.allclose(solve_spd(np.eye(3), b), b)
    assert np.allclose(solve_spd(np.diag([2.0, 4.0]), [2.0, 4.0]), [1.0, 1.0])
    m = RNG.normal(size=(6, 6))
    a = m @ m.T + np.eye(6)
    rhs = RNG.normal(size=6)
    x = solve_spd(a, rhs)
    assert np.linalg.norm(a @ x - rhs) <= 1e-10 * (np.linalg.norm(a) * np.linalg.norm(x) + np.linalg.norm(rhs))
    with pytest.raises(NotPositiveDefiniteError):
        solve_spd([[1.0, 2.0], [2.0, 1.0]], [1.0, 1.0])
