"""Operator tests against a straight-from-the-definition oracle.

The oracle below re-derives gain and loss with explicit loops and makes no
attempt to cancel neutral pairs analytically, so agreement with the library
also confirms that the neutral-pair exclusion is an exact identity.
"""

import csv
import math

import numpy as np
import pytest

import fragdiff as fd
from fragdiff.errors import ContractViolationError, DomainError
from fragdiff.reaction import (
    TruncationFn,
    apply_truncation,
    check_quasipositivity,
    dump_q_csv,
    q_field,
    q_regularized,
    q_truncated,
    regularization_denominator,
)


def naive_q(f, ks):
    n = ks.n
    gain = [0.0] * n
    loss = [0.0] * n
    for p in range(1, n + 1):
        for q in range(1, n + 1 - p):
            a = ks.a(p, q)
            for i in range(1, p + q):
                gain[i - 1] += 0.5 * ks.b(p, q, i) * a * f[p - 1] * f[q - 1]
            loss[p - 1] += a * f[p - 1] * f[q - 1]
    return np.array(gain) - np.array(loss)


def test_hand_worked_case():
    ks = fd.power_law_uniform(4, 4.0, 0.5)
    q = q_truncated([1.0, 1.0, 0.0, 0.0], ks)
    # only the (2,2) collision is active: each fragment size gets
    # (1/2)(2/3)(1/256), species 2 additionally loses a22 f2^2 = 1/256
    expect = np.array([1.0 / 768.0, -1.0 / 384.0, 1.0 / 768.0, 0.0])
    np.testing.assert_allclose(q, expect, rtol=1e-14, atol=0.0)


def test_matches_naive_oracle_uniform():
    rng = np.random.default_rng(11)
    for n in (5, 8, 12):
        for lam in (4.0, 5.5):
            ks = fd.power_law_uniform(n, lam, 0.5)
            for _ in range(6):
                f = rng.uniform(0.0, 2.0, size=n)
                # the oracle sums neutral pairs and cancels them in floating
                # point, leaving noise at the collision-term scale
                atol = 1e-14 * float(f.max()) ** 2
                np.testing.assert_allclose(
                    q_truncated(f, ks), naive_q(f, ks), rtol=1e-12, atol=atol
                )


def test_matches_naive_oracle_cheng_redner():
    rng = np.random.default_rng(12)
    for n in (5, 9):
        ks = fd.cheng_redner_uniform(n, 4.0, 0.25)
        for _ in range(6):
            f = rng.uniform(0.0, 2.0, size=n)
            got = q_truncated(f, ks)
            want = naive_q(f, ks)
            scale = np.abs(want).max() + 1e-30
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14 * scale)


def test_mass_null_sum():
    rng = np.random.default_rng(13)
    sizes = np.arange(1, 17, dtype=float)
    ks = fd.power_law_uniform(16, 4.0, 0.5)
    cr = fd.cheng_redner_uniform(16, 4.0, 0.5)
    for _ in range(25):
        f = rng.uniform(0.0, 3.0, size=16)
        for kernel in (ks, cr):
            q = q_truncated(f, kernel)
            activity = float(np.abs(q).sum()) + 1e-30
            assert abs(float(sizes @ q)) <= 1e-13 * activity


def test_small_systems_identically_zero():
    # with n <= 3 every in-range collision is neutral, so Q vanishes bitwise
    rng = np.random.default_rng(14)
    for n in (1, 2, 3):
        ks = fd.power_law_uniform(n, 4.0, 0.5)
        for _ in range(5):
            f = rng.uniform(0.0, 5.0, size=n)
            assert np.array_equal(q_truncated(f, ks), np.zeros(n))


def test_cheng_redner_n3_active():
    # CR treats (1,2) as active (the dimer shatters), unlike uniform breakage
    ks = fd.cheng_redner_uniform(3, 4.0, 0.0)
    q = q_truncated([1.0, 1.0, 0.0], ks)
    assert np.any(q != 0.0)
    assert abs(q[0] + 2.0 * q[1] + 3.0 * q[2]) <= 1e-15


def test_quasipositivity_random_states():
    rng = np.random.default_rng(15)
    ks = fd.power_law_uniform(10, 4.0, 1.0)
    for _ in range(40):
        f = rng.uniform(0.0, 2.0, size=10)
        i = int(rng.integers(1, 11))
        f[i - 1] = 0.0
        eps = float(rng.choice([0.0, 0.05]))
        q_i, gain_i = check_quasipositivity(f, ks, eps, i)
        assert q_i >= 0.0
        assert gain_i >= 0.0


def test_quasipositivity_requires_vanishing_species():
    ks = fd.power_law_uniform(6, 4.0, 0.5)
    with pytest.raises(DomainError):
        check_quasipositivity([1.0] * 6, ks, 0.0, 2)


def test_field_path_matches_point_path():
    rng = np.random.default_rng(16)
    n, m = 12, 7
    for family in ("uniform", "cr"):
        ks = (
            fd.power_law_uniform(n, 4.0, 0.5)
            if family == "uniform"
            else fd.cheng_redner_uniform(n, 4.0, 0.5)
        )
        F = rng.uniform(0.0, 2.0, size=(n, m))
        for eps in (0.0, 0.1):
            QF = q_field(F, ks, eps)
            assert QF.shape == (n, m)
            for x in range(m):
                np.testing.assert_allclose(
                    QF[:, x], q_regularized(F[:, x], ks, eps), rtol=1e-12, atol=1e-18
                )


def test_field_path_matches_point_path_table(tmp_path):
    n = 5
    with open(tmp_path / "a.csv", "w") as fh:
        fh.write("i,j,a\n")
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                fh.write(f"{i},{j},{1.0 / (i + j)}\n")
    with open(tmp_path / "b.csv", "w") as fh:
        fh.write("i,j,k,b\n")
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                for k in range(1, i + j):
                    fh.write(f"{i},{j},{k},{2.0 / (i + j - 1)}\n")
    with open(tmp_path / "d.csv", "w") as fh:
        fh.write("i,d\n")
        for i in range(1, n + 1):
            fh.write(f"{i},1.0\n")
    ks = fd.from_tables(tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "d.csv")
    rng = np.random.default_rng(17)
    F = rng.uniform(0.0, 1.0, size=(n, 6))
    QF = q_field(F, ks, 0.1)
    for x in range(6):
        np.testing.assert_allclose(
            QF[:, x], q_regularized(F[:, x], ks, 0.1), rtol=1e-12, atol=1e-18
        )


def test_field_2d_shape():
    ks = fd.power_law_uniform(6, 4.0, 0.5)
    F = np.ones((6, 4, 5))
    assert q_field(F, ks).shape == (6, 4, 5)


def test_regularization_identity_at_zero_eps():
    ks = fd.power_law_uniform(8, 4.0, 0.5)
    f = np.linspace(0.1, 1.0, 8)
    assert regularization_denominator(f, ks, 0.0) == 1.0
    q0 = q_truncated(f, ks)
    qr = q_regularized(f, ks, 0.0)
    assert np.array_equal(q0, qr)


def test_regularization_denominator_value():
    ks = fd.power_law_uniform(6, 4.0, 0.5)
    f = np.array([1.0, 0.5, 0.0, 2.0, 0.0, 0.0])
    eps = 0.25
    manual = 1.0 + eps * math.fsum(ks.c_mid[j] * f[j] ** 2 for j in range(6))
    assert regularization_denominator(f, ks, eps) == pytest.approx(manual, rel=1e-15)
    with pytest.raises(DomainError):
        regularization_denominator(f, ks, 1.0)


def test_input_validation():
    ks = fd.power_law_uniform(4, 4.0, 0.5)
    with pytest.raises(ContractViolationError):
        q_truncated([1.0, -0.1, 0.0, 0.0], ks)
    with pytest.raises(DomainError):
        q_truncated([1.0, 1.0], ks)
    with pytest.raises(DomainError):
        q_truncated([1.0, np.nan, 0.0, 0.0], ks)


def test_dump_q_csv_round_trip(tmp_path):
    ks = fd.power_law_uniform(6, 4.0, 0.5)
    f = np.linspace(1.0, 0.1, 6)
    path = tmp_path / "q.csv"
    dump_q_csv(path, f, ks, eps=0.1)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert list(rows[0]) == ["i", "gain", "loss", "denominator", "Q"]
    q = q_regularized(f, ks, 0.1)
    for i, row in enumerate(rows):
        assert int(row["i"]) == i + 1
        # repr round-trip: the file reproduces the doubles exactly
        assert float(row["Q"]) == q[i]
        assert float(row["gain"]) - float(row["loss"]) == pytest.approx(
            q[i] * float(row["denominator"]), rel=1e-13, abs=1e-300
        )


class TestTruncationFn:
    def test_identity_then_plateau(self):
        tm = TruncationFn(10.0)
        x = np.array([0.0, 4.2, 9.0])
        np.testing.assert_array_equal(tm(x), x)
        assert tm(11.0) == 10.0
        assert tm(25.0) == 10.0

    def test_knot_values_and_slopes(self):
        tm = TruncationFn(6.0)
        assert tm(5.0) == 5.0
        assert tm(7.0) == 6.0
        assert tm.deriv(5.0) == 1.0
        assert tm.deriv(7.0) == 0.0
        assert tm.second_deriv(5.0) == 0.0
        assert tm.second_deriv(7.0) == 0.0

    def test_derivative_bounds(self):
        for m in (1.0, 3.5, 12.0):
            assert TruncationFn(m).self_check()

    def test_finite_differences(self):
        tm = TruncationFn(8.0)
        h = 1e-6
        for s in (7.3, 7.9, 8.4, 8.9):
            fd_d = (tm(s + h) - tm(s - h)) / (2.0 * h)
            assert fd_d == pytest.approx(tm.deriv(s), abs=1e-8)
            # wider step for the second difference: roundoff scales as h**-2
            h2 = 1e-4
            fd_d2 = (tm(s + h2) - 2.0 * tm(s) + tm(s - h2)) / h2**2
            assert fd_d2 == pytest.approx(tm.second_deriv(s), abs=1e-5)

    def test_knot_mismatch_zero(self):
        left, right = TruncationFn(5.0).knot_mismatch()
        assert left <= 1e-12 and right <= 1e-12

    def test_apply_truncation(self):
        vals, d1, d2 = apply_truncation(np.array([1.0, 9.5, 20.0]), 10.0)
        assert vals[0] == 1.0 and vals[2] == 10.0
        assert d1[0] == 1.0 and d1[2] == 0.0
        assert d2[0] == 0.0

    def test_rejects_nonpositive_level(self):
        with pytest.raises(DomainError):
            TruncationFn(0.0)
