"""Collision, breakage, and diffusion coefficient families.

The model is parameterized by three ingredient sets:

* collision rates ``a_ij`` (symmetric, nonnegative),
* breakage counts ``b^k_ij`` = expected number of size-``k`` fragments
  produced when sizes ``i`` and ``j`` collide, constrained by local mass
  conservation ``sum_k k * b^k_ij = i + j`` and by ``b^k_ij = 0`` for
  ``k >= i + j``,
* diffusion coefficients ``d_i > 0``.

The built-in power-law family is

    a_ij = (i*j)**-lam,   b^k_ij = 2/(i+j-1),   d_i = i**-alpha,

for which the regularization weights ``c_j = sum_i a_ij = j**-lam * Z(lam)``
(with ``Z`` the power series ``sum i**-lam``) admit certified interval
enclosures via monotone integral tail bounds.  A uniform Cheng-Redner
variant redistributes each collider's own mass over sizes strictly below
it; its size-1 collider case is handled by a pass-through convention (see
``cheng_redner_count``).  Arbitrary tabulated kernels can be loaded from
CSV files.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from math import fsum
from typing import Callable

import numpy as np

from .errors import DivergentSeriesError, DomainError, FragdiffError

__all__ = [
    "Enclosure",
    "KernelSet",
    "ValidationReport",
    "breakage_count",
    "cheng_redner_count",
    "collision_rate",
    "diffusion_coeff",
    "power_series_enclosure",
    "reg_weight",
    "validate_kernel_set",
]

_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class Enclosure:
    """Certified interval ``[lo, hi]`` containing a series value."""

    lo: float
    hi: float
    truncation: int

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi


def _check_index(name, value):
    if not isinstance(value, (int, np.integer)):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise DomainError(f"{name} must be >= 1, got {value}")
    return int(value)


def collision_rate(i, j, lam):
    """Power-law collision rate ``(i*j)**-lam`` for sizes ``i``, ``j``."""
    i = _check_index("i", i)
    j = _check_index("j", j)
    if lam < 0:
        raise DomainError(f"lam must be >= 0, got {lam}")
    return float(i * j) ** (-lam)


def breakage_count(i, j, k):
    """Uniform breakage count: ``2/(i+j-1)`` for ``1 <= k <= i+j-1``, else 0."""
    i = _check_index("i", i)
    j = _check_index("j", j)
    k = _check_index("k", k)
    if k >= i + j:
        return 0.0
    return 2.0 / (i + j - 1)


def cheng_redner_count(i, j, k):
    """Uniform no-mass-transfer breakage: each collider shatters its own mass.

    A size-``i`` collider with ``i >= 2`` redistributes uniformly over sizes
    ``1..i-1`` (``2/(i-1)`` fragments each); a size-1 collider cannot break
    and passes through as a single size-1 particle.  The pass-through branch
    keeps ``sum_k k b^k_ij = i + j`` valid for every pair, at the cost of
    deviating from the strict sub-collider redistribution rule at size 1.
    """
    i = _check_index("i", i)
    j = _check_index("j", j)
    k = _check_index("k", k)

    def side(size):
        if size == 1:
            return 1.0 if k == 1 else 0.0
        if k <= size - 1:
            return 2.0 / (size - 1)
        return 0.0

    return side(i) + side(j)


def diffusion_coeff(i, alpha):
    """Size-dependent diffusion coefficient ``i**-alpha``."""
    i = _check_index("i", i)
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    return float(i) ** (-alpha)


def power_series_enclosure(s, tol=1e-10, max_terms=1 << 26):
    """Certified enclosure of ``sum_{i>=1} i**-s``.

    The tail beyond the partial sum is bracketed with monotone/convex
    integral bounds: for the decreasing convex integrand,

        int_{N+1}^inf x**-s dx  <=  sum_{i>N} i**-s  <=  int_{N+1/2}^inf x**-s dx.

    ``N`` is doubled until the bracket width drops below ``tol``.  Raises
    :class:`DivergentSeriesError` for ``s <= 1``.
    """
    if s <= 1.0:
        raise DivergentSeriesError(f"sum i**-s diverges for s={s} <= 1")
    n = 64
    partial = fsum(np.arange(1, n + 1, dtype=float) ** (-s))
    while True:
        tail_lo = (n + 1.0) ** (1.0 - s) / (s - 1.0)
        tail_hi = (n + 0.5) ** (1.0 - s) / (s - 1.0)
        pad = 4.0 * _EPS * partial
        lo, hi = partial + tail_lo - pad, partial + tail_hi + pad
        if hi - lo <= tol:
            return Enclosure(lo, hi, n)
        if n >= max_terms:
            raise FragdiffError(
                f"enclosure of sum i**-{s} did not reach width {tol:g} "
                f"within {max_terms} terms (width {hi - lo:g})"
            )
        partial += fsum(np.arange(n + 1, 2 * n + 1, dtype=float) ** (-s))
        n *= 2


def reg_weight(j, lam, tol=1e-10):
    """Certified enclosure of the regularization weight ``c_j = sum_i a_ij``.

    For the power-law family the column sum factorizes,
    ``c_j = j**-lam * sum_i i**-lam``, so a single series enclosure serves
    every ``j`` (scaling by ``j**-lam <= 1`` cannot widen it).
    """
    j = _check_index("j", j)
    if lam <= 1.0:
        raise DivergentSeriesError(
            f"regularization weight c_{j} diverges for lam={lam} <= 1"
        )
    z = power_series_enclosure(lam, tol)
    w = float(j) ** (-lam)
    return Enclosure(w * z.lo, w * z.hi, z.truncation)


def _neutral_column(bcol, p, q):
    """True when a breakage column re-emits exactly the colliding pair.

    Such collisions contribute identically zero to every component of the
    fragmentation operator and are skipped by the evaluators, which keeps
    the weighted null sum exact even near machine precision.
    """
    want = np.zeros(p + q - 1)
    want[p - 1] += 1.0
    want[q - 1] += 1.0
    return bcol.shape[0] == p + q - 1 and bool(np.all(bcol == want))


@dataclass
class KernelSet:
    """One concrete choice of collision/breakage/diffusion coefficients.

    Instances are built through the factory classmethods and precompute the
    dense tables the reaction evaluators need: the collision matrix, the
    diffusion vector, the regularization-weight enclosures, and (for
    non-uniform breakage) the gain tensor.
    """

    family: str
    n: int
    lam: float | None
    alpha: float | None
    d: np.ndarray
    c_lo: np.ndarray
    c_hi: np.ndarray
    _a_fn: Callable[[int, int], float]
    _b_fn: Callable[[int, int, int], float]
    sep_weights: np.ndarray | None = None  # a_ij == w_i * w_j when set
    uniform_breakage: bool = False
    notes: list[str] = field(default_factory=list)
    _a_mat: np.ndarray | None = None
    _gain_tensor: np.ndarray | None = None
    _loss_matrix: np.ndarray | None = None

    # -- factories ---------------------------------------------------------

    @classmethod
    def power_law_uniform(cls, n, lam, alpha, reg_tol=1e-10, profile="weaker"):
        n = _check_index("n", n)
        if lam < 0 or alpha < 0:
            raise DomainError("lam and alpha must be >= 0")
        notes = []
        if profile == "weaker":
            if lam < 4:
                msg = f"lam={lam} is below the assumption-family threshold 4"
                warnings.warn(msg, stacklevel=2)
                notes.append(msg)
            if alpha > 1:
                msg = f"alpha={alpha} is outside [0, 1]"
                warnings.warn(msg, stacklevel=2)
                notes.append(msg)
        i1 = np.arange(1, n + 1, dtype=float)
        z = power_series_enclosure(lam, reg_tol)
        w = i1 ** (-lam)
        return cls(
            family="power_law_uniform",
            n=n,
            lam=float(lam),
            alpha=float(alpha),
            d=i1 ** (-alpha),
            c_lo=w * z.lo,
            c_hi=w * z.hi,
            _a_fn=lambda i, j: collision_rate(i, j, lam),
            _b_fn=breakage_count,
            sep_weights=w,
            uniform_breakage=True,
            notes=notes,
        )

    @classmethod
    def cheng_redner_uniform(cls, n, lam, alpha, reg_tol=1e-10, profile="weaker"):
        base = cls.power_law_uniform(n, lam, alpha, reg_tol=reg_tol, profile=profile)
        base.family = "cheng_redner_uniform"
        base._b_fn = cheng_redner_count
        base.uniform_breakage = False
        base.notes.append(
            "size-1 colliders pass through unchanged (the strict sub-collider "
            "redistribution rule is unsatisfiable at size 1)"
        )
        return base

    @classmethod
    def from_tables(cls, a_path, b_path, d_path, n=None):
        """Load a tabulated kernel from three CSV files.

        ``a_path`` has columns ``i,j,a``;  ``b_path`` has ``i,j,k,b``;
        ``d_path`` has ``i,d``.  Missing entries default to zero (``a``,
        ``b``) and must be present for every ``d_i``.
        """
        a_rows = _read_csv_rows(a_path, 3)
        b_rows = _read_csv_rows(b_path, 4)
        d_rows = _read_csv_rows(d_path, 2)
        sizes = [int(r[0]) for r in d_rows]
        n_table = max(sizes)
        if n is None:
            n = n_table
        if sorted(sizes) != list(range(1, n_table + 1)):
            raise DomainError(f"{d_path}: need one d_i row for each i = 1..{n_table}")
        if n > n_table:
            raise DomainError(f"requested n={n} exceeds table size {n_table}")
        d = np.zeros(n)
        for i, val in d_rows:
            if int(i) <= n:
                d[int(i) - 1] = float(val)
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise DomainError("diffusion coefficients must be positive and finite")

        a_mat = np.zeros((n, n))
        for i, j, val in a_rows:
            i, j, val = int(i), int(j), float(val)
            if val < 0:
                raise DomainError(f"a[{i},{j}] = {val} is negative")
            if i <= n and j <= n:
                a_mat[i - 1, j - 1] = val

        kmax = 2 * n - 1
        b_tab = np.zeros((kmax, n, n))
        for i, j, k, val in b_rows:
            i, j, k, val = int(i), int(j), int(k), float(val)
            if val < 0:
                raise DomainError(f"b[{k};{i},{j}] = {val} is negative")
            if i <= n and j <= n and k <= kmax:
                b_tab[k - 1, i - 1, j - 1] = val

        def a_fn(i, j):
            return float(a_mat[i - 1, j - 1]) if i <= n and j <= n else 0.0

        def b_fn(i, j, k):
            if i <= n and j <= n and k <= kmax:
                return float(b_tab[k - 1, i - 1, j - 1])
            return 0.0

        c = np.array([fsum(a_mat[:, j]) for j in range(n)])
        ks = cls(
            family="table",
            n=n,
            lam=None,
            alpha=None,
            d=d,
            c_lo=c.copy(),
            c_hi=c.copy(),
            _a_fn=a_fn,
            _b_fn=b_fn,
        )
        ks._a_mat = a_mat
        return ks

    # -- accessors ---------------------------------------------------------

    def a(self, i, j):
        """Collision rate for the (1-based) pair ``(i, j)``."""
        return self._a_fn(_check_index("i", i), _check_index("j", j))

    def b(self, i, j, k):
        """Breakage count of size-``k`` fragments from an ``(i, j)`` collision."""
        return self._b_fn(_check_index("i", i), _check_index("j", j), _check_index("k", k))

    def d_of(self, i):
        i = _check_index("i", i)
        if i > self.n:
            raise DomainError(f"i={i} exceeds truncation size n={self.n}")
        return float(self.d[i - 1])

    @property
    def c_mid(self):
        return 0.5 * (self.c_lo + self.c_hi)

    def a_matrix(self):
        if self._a_mat is None:
            if self.sep_weights is not None:
                self._a_mat = np.outer(self.sep_weights, self.sep_weights)
            else:
                n = self.n
                self._a_mat = np.array(
                    [[self._a_fn(i, j) for j in range(1, n + 1)] for i in range(1, n + 1)]
                )
        return self._a_mat

    def b_column(self, p, q):
        """Fragment counts ``b^k_pq`` for ``k = 1..p+q-1`` as an array."""
        if self.uniform_breakage:
            return np.full(p + q - 1, 2.0 / (p + q - 1))
        return np.array([self._b_fn(p, q, k) for k in range(1, p + q)])

    def neutral_pair(self, p, q):
        """True when an ``(p, q)`` collision re-emits exactly ``{p, q}``."""
        if self.uniform_breakage:
            return p + q <= 3
        return _neutral_column(self.b_column(p, q), p, q)

    def gain_tensor(self):
        """Dense ``B[i-1, p-1, q-1] = b^i_pq * a_pq`` masked to ``p+q <= n``.

        Neutral pairs are zeroed; their exact cancellation against the loss
        term is applied analytically instead (see :mod:`fragdiff.reaction`).
        """
        if self._gain_tensor is None:
            n = self.n
            B = np.zeros((n, n, n))
            amat = self.a_matrix()
            for p in range(1, n + 1):
                for q in range(1, n + 1 - p):
                    if self.neutral_pair(p, q):
                        continue
                    col = self.b_column(p, q)
                    top = min(n, p + q - 1)
                    B[:top, p - 1, q - 1] = col[:top] * amat[p - 1, q - 1]
            self._gain_tensor = B
        return self._gain_tensor

    def loss_matrix(self):
        """Dense ``M[i-1, j-1] = a_ij`` masked to ``i+j <= n``, neutral pairs zeroed."""
        if self._loss_matrix is None:
            n = self.n
            M = self.a_matrix().copy()
            i1 = np.arange(1, n + 1)
            M[i1[:, None] + i1[None, :] > n] = 0.0
            for p in range(1, n + 1):
                for q in range(1, n + 1 - p):
                    if self.neutral_pair(p, q):
                        M[p - 1, q - 1] = 0.0
            self._loss_matrix = M
        return self._loss_matrix


def _read_csv_rows(path, width):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if all(not _is_number(cell) for cell in row):
                continue  # header line
            if len(row) != width:
                raise DomainError(f"{path}: expected {width} columns, got {row!r}")
            rows.append(row)
    if not rows:
        raise DomainError(f"{path}: no data rows")
    return rows


def _is_number(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


@dataclass
class ValidationReport:
    ok: bool
    max_mass_residual: float
    pairs_checked: int
    exact_pairs_checked: int
    failures: list[str]
    notes: list[str]


def validate_kernel_set(ks, i_max=None, exact_limit=64, rel_tol=1e-12):
    """Check the structural identities of a kernel set.

    Verifies symmetry and nonnegativity of ``a`` and ``b``, positivity of
    ``d``, the support condition ``b^k_ij = 0`` for ``k >= i+j``, and local
    mass conservation ``sum_k k b^k_ij = i+j``.  Mass conservation is checked
    in exact rational arithmetic for ``i + j <= exact_limit`` (built-in
    families only) and in floating point with relative tolerance ``rel_tol``
    for all ``i, j <= i_max``.
    """
    if i_max is None:
        i_max = ks.n
    failures = []
    notes = list(ks.notes)

    if np.any(ks.d <= 0) or not np.all(np.isfinite(ks.d)):
        failures.append("diffusion coefficients must be positive and finite")

    # a-symmetry / nonnegativity on the stored range
    amat = ks.a_matrix()
    if not np.array_equal(amat, amat.T):
        failures.append("collision rates are not symmetric")
    if np.any(amat < 0):
        failures.append("collision rates contain negative entries")

    worst = 0.0
    pairs = 0
    exact_pairs = 0
    for i in range(1, i_max + 1):
        for j in range(i, i_max + 1):
            s = i + j
            col = ks.b_column(i, j)
            col_t = ks.b_column(j, i)
            if not np.array_equal(col, col_t):
                failures.append(f"b^k_{{{i},{j}}} != b^k_{{{j},{i}}}")
            if np.any(col < 0):
                failures.append(f"b^k_{{{i},{j}}} has negative entries")
            for k in range(s, s + 3):
                if ks._b_fn(i, j, k) != 0.0:
                    failures.append(f"b^{k}_{{{i},{j}}} nonzero beyond support")
                    break
            total = fsum(np.arange(1, s, dtype=float) * col)
            resid = abs(total - s) / s
            worst = max(worst, resid)
            if resid > rel_tol:
                failures.append(
                    f"mass conservation off at ({i},{j}): sum k b^k = {total!r} != {s}"
                )
            pairs += 1
            if s <= exact_limit and ks.family != "table":
                if not _exact_mass_ok(ks, i, j):
                    failures.append(f"exact mass conservation fails at ({i},{j})")
                exact_pairs += 1
            if len(failures) > 20:
                failures.append("... further failures suppressed")
                return ValidationReport(False, worst, pairs, exact_pairs, failures, notes)

    return ValidationReport(not failures, worst, pairs, exact_pairs, failures, notes)


def _exact_mass_ok(ks, i, j):
    """Local mass conservation in exact rational arithmetic."""
    s = i + j
    if ks.uniform_breakage:
        total = Fraction(2, s - 1) * sum(range(1, s))
        return total == s
    if ks.family == "cheng_redner_uniform":
        def side(size):
            if size == 1:
                return Fraction(1)
            return Fraction(2, size - 1) * sum(range(1, size))
        return side(i) + side(j) == s
    raise FragdiffError(f"no exact rational form for family {ks.family!r}")


# module-level aliases for the factory classmethods
power_law_uniform = KernelSet.power_law_uniform
cheng_redner_uniform = KernelSet.cheng_redner_uniform
from_tables = KernelSet.from_tables
