"""Arithmetic for the threadlike (filiform) nilpotent Lie group of step n.

The Lie algebra has a basis X, Y_1, ..., Y_n with the only nonzero brackets
[X, Y_i] = Y_{i+1} (and [X, Y_n] = 0).  The group is identified with
R^{n+1} through exponential coordinates of the second kind, written as a
pair (a, z) with z = (z_1, ..., z_n).  In this chart the product is

    (a, z) * (a', z'),   k-th z-coordinate:  z_k + sum_{i=0}^{k-1} (a^i / i!) z'_{k-i}

and the Haar measure is the Lebesgue measure da dz.

n = 1 degenerates to the abelian plane, n = 2 is the Heisenberg group H_3.

A faithful unipotent matrix realization is provided (``algebra_matrix``,
``group_matrix``); it serves as an independent cross-check of the coordinate
formulas and is not used as the runtime representation.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

# 1/(k+1)! underflows any useful contribution beyond this step; the matrix
# realization also becomes numerically useless in naive float arithmetic.
MAX_STEP = 12


@dataclass(frozen=True)
class GroupSpec:
    """Nilpotency step n; the group has dimension n + 1."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError(f"step n must be a positive integer, got {self.n!r}")
        if self.n > MAX_STEP:
            raise ValueError(f"step n={self.n} exceeds supported maximum {MAX_STEP}")

    @property
    def dim(self) -> int:
        return self.n + 1

    def identity(self) -> "GroupElement":
        return GroupElement(0.0, np.zeros(self.n))

    def factorials(self) -> np.ndarray:
        """[0!, 1!, ..., n!] as floats."""
        return np.array([factorial(k) for k in range(self.n + 1)], dtype=float)


def _frozen_vector(obj, name, value):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a nonempty vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or not np.isfinite(obj.a):
        raise ValueError(f"{type(obj).__name__} entries must be finite")
    arr = arr.copy()
    arr.setflags(write=False)
    object.__setattr__(obj, name, arr)


@dataclass(frozen=True)
class AlgebraElement:
    """a X + sum_i b_i Y_i."""

    a: float
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        _frozen_vector(self, "b", self.b)

    @property
    def n(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class GroupElement:
    """Point (a, z) of the group in second-kind coordinates."""

    a: float
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        _frozen_vector(self, "z", self.z)

    @property
    def n(self) -> int:
        return self.z.shape[0]


def _check_n(spec: GroupSpec, *elements):
    for el in elements:
        if el.n != spec.n:
            raise ValueError(f"element of length {el.n} does not match GroupSpec(n={spec.n})")


def exp_coordinates(spec: GroupSpec, w: AlgebraElement) -> GroupElement:
    """Group exponential: z_j = sum_{k=0}^{j-1} a^k b_{j-k} / (k+1)!."""
    _check_n(spec, w)
    n = spec.n
    a, b = w.a, w.b
    coeff = a ** np.arange(n) / np.array([factorial(k + 1) for k in range(n)])
    z = np.empty(n)
    for j in range(1, n + 1):
        k = np.arange(j)
        z[j - 1] = np.sum(coeff[k] * b[j - 1 - k])
    return GroupElement(a, z)


def log_coordinates(spec: GroupSpec, g: GroupElement) -> AlgebraElement:
    """Inverse of ``exp_coordinates`` by back-substitution."""
    _check_n(spec, g)
    n = spec.n
    a, z = g.a, g.z
    b = np.empty(n)
    for j in range(1, n + 1):
        acc = z[j - 1]
        for k in range(1, j):
            acc -= a**k * b[j - 1 - k] / factorial(k + 1)
        b[j - 1] = acc
    return AlgebraElement(a, b)


def multiply(spec: GroupSpec, g: GroupElement, h: GroupElement) -> GroupElement:
    """Group product in the (a, z) chart."""
    _check_n(spec, g, h)
    n = spec.n
    fact = spec.factorials()
    apow = g.a ** np.arange(n) / fact[:n]
    z = np.empty(n)
    for k in range(1, n + 1):
        i = np.arange(k)
        z[k - 1] = g.z[k - 1] + np.sum(apow[i] * h.z[k - 1 - i])
    return GroupElement(g.a + h.a, z)


def inverse(spec: GroupSpec, g: GroupElement) -> GroupElement:
    """g^{-1}, solved triangularly from multiply(g, h) = identity."""
    _check_n(spec, g)
    n = spec.n
    fact = spec.factorials()
    apow = g.a ** np.arange(n) / fact[:n]
    h = np.empty(n)
    for k in range(1, n + 1):
        acc = -g.z[k - 1]
        for i in range(1, k):
            acc -= apow[i] * h[k - 1 - i]
        h[k - 1] = acc
    return GroupElement(-g.a, h)


def bracket(spec: GroupSpec, u: AlgebraElement, v: AlgebraElement) -> AlgebraElement:
    """[u, v]; the Y_{i+1} coefficient is u_a v_{b,i} - v_a u_{b,i}."""
    _check_n(spec, u, v)
    n = spec.n
    out = np.zeros(n)
    if n >= 2:
        out[1:] = u.a * v.b[:-1] - v.a * u.b[:-1]
    return AlgebraElement(0.0, out)


def left_invariant_frame(spec: GroupSpec, g: GroupElement):
    """Coefficient vectors of the horizontal frame at g in the (a, z) chart.

    First field is d/da; the second is
    d/dz_1 + a d/dz_2 + ... + a^{n-1}/(n-1)! d/dz_n.
    Components are ordered (a, z_1, ..., z_n).
    """
    _check_n(spec, g)
    n = spec.n
    x1 = np.zeros(n + 1)
    x1[0] = 1.0
    x2 = np.zeros(n + 1)
    x2[1:] = g.a ** np.arange(n) / spec.factorials()[:n]
    return x1, x2


def left_invariant_basis(spec: GroupSpec, g: GroupElement) -> np.ndarray:
    """All n+1 left-invariant basis fields at g, rows (X~, Y~_1, ..., Y~_n).

    Y~_k = sum_{j>=k} a^{j-k}/(j-k)! d/dz_j; these are exactly the iterated
    brackets of the horizontal frame ([X~, Y~_k] = Y~_{k+1}), so the row rank
    being n+1 is the bracket-generating (Hörmander) condition at g.
    """
    _check_n(spec, g)
    n = spec.n
    fact = spec.factorials()
    rows = np.zeros((n + 1, n + 1))
    rows[0, 0] = 1.0
    for k in range(1, n + 1):
        j = np.arange(k, n + 1)
        rows[k, j] = g.a ** (j - k) / fact[j - k]
    return rows


# ---------------------------------------------------------------------------
# Unipotent matrix realization (reference oracle)
# ---------------------------------------------------------------------------

def algebra_matrix(spec: GroupSpec, w: AlgebraElement) -> np.ndarray:
    """Strictly upper-triangular matrix of a X + sum b_i Y_i.

    For n >= 2: a sits on the superdiagonal of the leading n x n block and
    b_n, ..., b_1 fill the last column.  For n = 1 the bracket structure is
    trivial and a faithful 3 x 3 abelian embedding is used instead.
    """
    _check_n(spec, w)
    n = spec.n
    if n == 1:
        m = np.zeros((3, 3))
        m[0, 1] = w.a
        m[0, 2] = w.b[0]
        return m
    m = np.zeros((n + 1, n + 1))
    for i in range(n - 1):
        m[i, i + 1] = w.a
    for i in range(n):
        m[i, n] = w.b[n - 1 - i]
    return m


def group_matrix(spec: GroupSpec, g: GroupElement) -> np.ndarray:
    """Unipotent matrix of the group element (a, z)."""
    _check_n(spec, g)
    n = spec.n
    if n == 1:
        m = np.eye(3)
        m[0, 1] = g.a
        m[0, 2] = g.z[0]
        return m
    fact = spec.factorials()
    m = np.eye(n + 1)
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = g.a ** (j - i) / fact[j - i]
        m[i, n] = g.z[n - 1 - i]
    return m


def group_from_matrix(spec: GroupSpec, m: np.ndarray) -> GroupElement:
    """Read (a, z) back off a unipotent matrix produced by ``group_matrix``."""
    n = spec.n
    if n == 1:
        return GroupElement(m[0, 1], np.array([m[0, 2]]))
    a = m[0, 1]
    z = np.array([m[n - 1 - i, n] for i in range(n)])
    return GroupElement(a, z)
