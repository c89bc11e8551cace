"""Coadjoint action, orbit classification, Plancherel density, and the
infinite-dimensional irreducible unitary representations of the threadlike
group realized on grid-sampled functions.

A linear functional on the algebra is written l = alpha X* + sum_i beta_i Y_i*.
Generic duals are parameterized by Lambda = (lambda_1, ..., lambda_{n-1}) with
lambda_{n-1} != 0, embedded as

    l = lambda_{n-1} Y_n* + lambda_{n-2} Y_{n-2}* + ... + lambda_1 Y_1*,

i.e. the Y_{n-1}* direction carries no independent parameter.  The
representation acts on L^2(R) by

    (pi_Lambda(g) f)(x) = exp(2 pi i sum_k c_k B_k(x, z)) f(x + a),

with c the embedding above and B_k(x, z) = sum_{i<=k} z_i x^{k-i}/(k-i)!.
Each B_k satisfies the exact cocycle identity
B_k(x, z(gh)) = B_k(x, z(g)) + B_k(x + a_g, z(h)), which makes pi_Lambda a
group homomorphism for any coefficient vector c; the embedding is the one
under which the generator sum matches the reduced Schrödinger operator.

The Plancherel measure on the generic duals is |lambda_{n-1}| dLambda times a
calibration constant fixed numerically by the Plancherel identity (see
``kernel_assembly.calibrate_plancherel``).
"""

import warnings
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .lie_core import AlgebraElement, GroupElement, GroupSpec, log_coordinates


@dataclass(frozen=True)
class DualFunctional:
    """alpha X* + sum_i beta_i Y_i*."""

    alpha: float
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        arr = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if not (np.all(np.isfinite(arr)) and np.isfinite(self.alpha)):
            raise ValueError("DualFunctional entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "beta", arr)

    @property
    def n(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class DualParameter:
    """Lambda = (lambda_1 .. lambda_{n-1}) indexing a generic coadjoint orbit."""

    lam: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.lam, dtype=float)).copy()
        if not np.all(np.isfinite(arr)):
            raise ValueError("DualParameter entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "lam", arr)

    @property
    def generic(self) -> bool:
        return self.lam[-1] != 0.0


def _as_lambda(lam) -> np.ndarray:
    if isinstance(lam, DualParameter):
        return lam.lam
    return np.atleast_1d(np.asarray(lam, dtype=float))


@dataclass(frozen=True)
class OrbitClass:
    """Coadjoint orbit type: m is the largest index with beta_m != 0 (0 if none).

    kind is 'generic2d' (m >= 3), 'degenerate2d' (m == 2) or 'point' (m <= 1).
    beta holds (beta_1 .. beta_m).
    """

    kind: str
    m: int
    alpha: float
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class GridFunction:
    """Complex function sampled on a uniform grid; values are immutable."""

    xs: np.ndarray
    values: np.ndarray
    mass_loss: float = 0.0

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        vals = np.asarray(self.values, dtype=complex).copy()
        if xs.ndim != 1 or xs.size < 2:
            raise ValueError("grid needs at least two points")
        steps = np.diff(xs)
        if not np.allclose(steps, steps[0], rtol=1e-12, atol=1e-12) or steps[0] <= 0:
            raise ValueError("grid must be uniform and strictly increasing")
        xs = xs.copy()
        xs.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", vals)

    @property
    def dx(self) -> float:
        return float(self.xs[1] - self.xs[0])

    def norm(self) -> float:
        """L^2 norm with the grid measure."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.dx))

    @staticmethod
    def uniform(x_min: float, x_max: float, num: int, values=None) -> "GridFunction":
        xs = np.linspace(x_min, x_max, num)
        if values is None:
            values = np.zeros(num, dtype=complex)
        return GridFunction(xs, values)


# ---------------------------------------------------------------------------
# Coadjoint action and orbits
# ---------------------------------------------------------------------------

def coadjoint_action(spec: GroupSpec, w: GroupElement, l: DualFunctional) -> DualFunctional:
    """Ad*_w l in the dual basis.

    w enters through its algebra coordinates (x, y_1..y_n):
      alpha' = alpha + sum_{i=2}^n beta_i sum_{k=1}^{i-1} (-1)^{k+1} y_{i-k} x^{k-1}/k!
      beta'_j = sum_{k=j}^n beta_k (-1)^{k-j} x^{k-j}/(k-j)!
    """
    if l.n != spec.n:
        raise ValueError("functional length does not match GroupSpec")
    wa = log_coordinates(spec, w)
    x, y = wa.a, wa.b
    n = spec.n
    beta = l.beta
    alpha = l.alpha
    for i in range(2, n + 1):
        k = np.arange(1, i)
        alpha += beta[i - 1] * np.sum(
            (-1.0) ** (k + 1) * y[i - k - 1] * x ** (k - 1)
            / np.array([factorial(int(kk)) for kk in k])
        )
    new_beta = np.empty(n)
    for j in range(1, n + 1):
        k = np.arange(j, n + 1)
        new_beta[j - 1] = np.sum(
            beta[k - 1] * (-1.0) ** (k - j) * x ** (k - j)
            / np.array([factorial(int(kk) - j) for kk in k])
        )
    return DualFunctional(alpha, new_beta)


def orbit_polynomial(j: int, x: float, b_m: np.ndarray) -> float:
    """f_j(x) = sum_{k=j}^m (-1)^{k-j} (beta_k / beta_m^{k-j}) (beta_{m-1} - x)^{k-j} / (k-j)!.

    b_m = (beta_1 .. beta_m) with beta_m != 0 pins the orbit; f_m = beta_m and
    f_{m-1} = x identically, so x is the free Y_{m-1}* coordinate on the orbit.
    """
    b_m = np.atleast_1d(np.asarray(b_m, dtype=float))
    m = b_m.shape[0]
    if not 1 <= j <= m:
        raise ValueError(f"need 1 <= j <= m={m}, got j={j}")
    if b_m[-1] == 0.0:
        raise ValueError("beta_m must be nonzero")
    beta_m = b_m[-1]
    beta_m1 = b_m[-2] if m >= 2 else 0.0
    k = np.arange(j, m + 1)
    terms = (
        (-1.0) ** (k - j)
        * b_m[k - 1]
        / beta_m ** (k - j)
        * (beta_m1 - x) ** (k - j)
        / np.array([factorial(int(kk) - j) for kk in k])
    )
    return float(np.sum(terms))


def classify_orbit(l: DualFunctional) -> OrbitClass:
    """Largest index m with beta_m != 0 decides the orbit type."""
    nz = np.nonzero(l.beta)[0]
    m = int(nz[-1]) + 1 if nz.size else 0
    if m >= 3:
        kind = "generic2d"
    elif m == 2:
        kind = "degenerate2d"
    else:
        kind = "point"
    return OrbitClass(kind, m, l.alpha, l.beta[:m].copy())


def radical_basis(spec: GroupSpec, l: DualFunctional) -> list:
    """Basis of rad_l = {W : l([W, .]) = 0} for a two-dimensional orbit.

    The defining relations reduce to a = 0 and sum_{i=1}^{n-1} b_i beta_{i+1} = 0;
    eliminating b_{m-1} (its coefficient beta_m is nonzero) leaves n - 1
    independent directions.  Rejects point orbits (m <= 1), where the radical
    is the whole algebra.
    """
    if l.n != spec.n:
        raise ValueError("functional length does not match GroupSpec")
    cls = classify_orbit(l)
    if cls.m <= 1:
        raise ValueError("radical basis is only provided for two-dimensional orbits")
    n, m = spec.n, cls.m
    beta = l.beta
    basis = []
    for i in range(1, n):
        if i == m - 1:
            continue
        b = np.zeros(n)
        b[i - 1] = 1.0
        b[m - 2] = -beta[i] / beta[m - 1]
        basis.append(AlgebraElement(0.0, b))
    b = np.zeros(n)
    b[n - 1] = 1.0
    basis.append(AlgebraElement(0.0, b))
    return basis


# ---------------------------------------------------------------------------
# Representations on grid functions
# ---------------------------------------------------------------------------

def b_polynomial(k: int, x, z) -> np.ndarray | float:
    """B_k(x, z) = sum_{i=1}^k z_i x^{k-i} / (k-i)!, vectorized in x."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not 1 <= k <= z.shape[0]:
        raise ValueError(f"need 1 <= k <= len(z)={z.shape[0]}, got k={k}")
    coeffs = np.array([z[k - d - 1] / factorial(d) for d in range(k)])
    return np.polynomial.polynomial.polyval(x, coeffs)


def dual_coefficients(spec: GroupSpec, lam) -> np.ndarray:
    """Coefficients (c_1..c_n) of Lambda's dual functional on Y_1..Y_n.

    c_j = lambda_j for j <= n-2, c_{n-1} = 0, c_n = lambda_{n-1}.
    """
    lam = _as_lambda(lam)
    n = spec.n
    if n < 2 or lam.shape[0] != n - 1:
        raise ValueError(f"Lambda must have length n-1={n - 1}")
    c = np.zeros(n)
    c[: n - 2] = lam[: n - 2]
    c[n - 1] = lam[n - 2]
    return c


def to_dual_functional(spec: GroupSpec, lam) -> DualFunctional:
    """The generic-orbit representative l carried by Lambda."""
    return DualFunctional(0.0, dual_coefficients(spec, lam))


def phase_polynomial_coeffs(spec: GroupSpec, lam, z) -> np.ndarray:
    """x-coefficients of sum_k c_k B_k(x, z), degree n-1."""
    c = dual_coefficients(spec, lam)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    n = spec.n
    poly = np.zeros(n)
    for d in range(n):
        ks = np.arange(d + 1, n + 1)
        poly[d] = np.sum(c[ks - 1] * z[ks - d - 1]) / factorial(d)
    return poly


def phase_polynomial(spec: GroupSpec, lam, x, z):
    """sum_k c_k B_k(x, z) evaluated at x (scalar or array)."""
    return np.polynomial.polynomial.polyval(x, phase_polynomial_coeffs(spec, lam, z))


def phase_z_coefficients(spec: GroupSpec, lam, x) -> np.ndarray:
    """Coefficients alpha_i(x) of z_i in sum_k c_k B_k(x, z), vectorized in x.

    Returns an array of shape (n,) + shape(x); the phase is
    2 pi sum_i alpha_i(x) z_i, linear in z.
    """
    c = dual_coefficients(spec, lam)
    x = np.asarray(x, dtype=float)
    n = spec.n
    out = np.zeros((n,) + x.shape)
    for i in range(1, n + 1):
        for k in range(i, n + 1):
            if c[k - 1] != 0.0:
                out[i - 1] += c[k - 1] * x ** (k - i) / factorial(k - i)
    return out


def representation_apply(
    spec: GroupSpec,
    lam,
    g: GroupElement,
    f: GridFunction,
    mass_warn: float = 1e-6,
) -> GridFunction:
    """(pi_Lambda(g) f)(x) = e^{2 pi i sum c_k B_k(x, z)} f(x + a).

    When a is a lattice multiple of the grid spacing the shift is an exact
    index shift with zero fill; the squared-mass fraction shifted out of the
    window is recorded in ``mass_loss`` and triggers a warning above
    ``mass_warn``.  Off-lattice shifts fall back to a Fourier (band-limited)
    shift, which wraps around instead of zero-filling; keep a generous margin.
    """
    xs = f.xs
    dx = f.dx
    vals = f.values
    shift = g.a / dx
    k = int(round(shift))
    total = float(np.sum(np.abs(vals) ** 2))
    lost = 0.0
    if abs(shift - k) < 1e-8:
        out = np.zeros_like(vals)
        if k == 0:
            out = vals.copy()
        elif k > 0:
            if k < vals.size:
                out[:-k] = vals[k:]
                lost = float(np.sum(np.abs(vals[:k]) ** 2))
            else:
                lost = total
        else:
            if -k < vals.size:
                out[-k:] = vals[:k]
                lost = float(np.sum(np.abs(vals[k:]) ** 2))
            else:
                lost = total
    else:
        freqs = np.fft.fftfreq(vals.size, d=dx)
        out = np.fft.ifft(np.fft.fft(vals) * np.exp(2j * np.pi * freqs * g.a))
    frac = lost / total if total > 0 else 0.0
    if frac > mass_warn:
        warnings.warn(
            f"representation shift truncated {frac:.2e} of the squared mass",
            stacklevel=2,
        )
    phase = np.exp(2j * np.pi * phase_polynomial(spec, lam, xs, g.z))
    return GridFunction(xs, phase * out, mass_loss=frac)


def plancherel_density(spec: GroupSpec, lam, constant: float = 1.0) -> float:
    """|lambda_{n-1}| times the calibration constant."""
    lam = _as_lambda(lam)
    if spec.n < 2 or lam.shape[0] != spec.n - 1:
        raise ValueError(f"Lambda must have length n-1={spec.n - 1}")
    return constant * abs(float(lam[-1]))
