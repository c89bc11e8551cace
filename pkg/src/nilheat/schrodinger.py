"""Reduced one-dimensional Schrödinger operators d^2/dx^2 - V(x) and their
heat kernels.

Under the generalized Fourier transform the horizontal Laplacian of the
threadlike group becomes, in each generic representation Lambda, the operator

    f'' - V_Lambda f,    V_Lambda(x) = 4 pi^2 (lambda_{n-1} x^{n-1}/(n-1)!
                                       + sum_{j<=n-2} lambda_j x^{j-1}/(j-1)!)^2.

The heat kernel k_t(x, y) of this operator is evaluated two ways: a Mehler
closed form when V is quadratic (Heisenberg case), and a Hermite-Galerkin
eigenexpansion in general.  A Crank-Nicolson time stepper provides an
independent oracle for tests.

Sign convention: we work with H = -(d^2/dx^2 - V), a nonnegative operator,
and k_t = e^{-tH}.
"""

import warnings
from dataclasses import dataclass
from math import factorial

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import eigh, eigh_tridiagonal, solve_banded
from scipy.special import roots_hermite

from .lie_core import GroupSpec
from .orbit_method import GridFunction, _as_lambda


@dataclass(frozen=True)
class PolynomialPotential:
    """V(x) = sum_k coeffs[k] x^k, nonnegative with positive leading term."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.coeffs, dtype=float)).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, x):
        return npoly.polyval(x, self.coeffs)


@dataclass(frozen=True)
class SolverConfig:
    """Hermite-Galerkin solver knobs.

    ``energy_floor`` lifts the basis scale so the truncated basis can resolve
    eigenvalues up to roughly that energy even when the potential is shallow;
    kernel assembly sets it to its spectral cutoff divided by t.
    """

    num_modes: int = 120
    quad_points: int | None = None
    basis_scale: float | None = None
    energy_floor: float = 0.0

    def __post_init__(self):
        if self.num_modes < 4:
            raise ValueError("num_modes must be at least 4")


@dataclass(frozen=True)
class SpectralKernel:
    """Eigen-decomposition of H = -d^2/dx^2 + V in a scaled Hermite basis.

    ``eigenvectors[:, m]`` holds the coefficients of the m-th eigenfunction in
    the orthonormal basis sqrt(s) phi_k(s x), k = 0..M-1.
    """

    basis_scale: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def num_modes(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass(frozen=True)
class KernelValue:
    value: float
    tail: float


# ---------------------------------------------------------------------------
# Potentials and generators
# ---------------------------------------------------------------------------

def potential_root(spec: GroupSpec, lam) -> np.ndarray:
    """x-coefficients of the polynomial p with V_Lambda = 4 pi^2 p^2."""
    lam = _as_lambda(lam)
    n = spec.n
    if n < 2 or lam.shape[0] != n - 1:
        raise ValueError(f"Lambda must have length n-1={n - 1}")
    q = np.zeros(n)
    q[n - 1] = lam[n - 2] / factorial(n - 1)
    for j in range(1, n - 1):
        q[j - 1] = lam[j - 1] / factorial(j - 1)
    return q


def reduced_potential(spec: GroupSpec, lam) -> PolynomialPotential:
    """V_Lambda as an explicit coefficient vector of degree 2(n-1)."""
    lam = _as_lambda(lam)
    if lam[-1] == 0.0:
        raise ValueError("lambda_{n-1} must be nonzero for a generic orbit")
    q = potential_root(spec, lam)
    return PolynomialPotential(4.0 * np.pi**2 * npoly.polymul(q, q))


def dpi_generators(spec: GroupSpec, lam):
    """Grid realizations of the two differentiated generators.

    Returns (d1, d2): d1 is a second-order central difference d/dx with zero
    boundary fill, d2 is pointwise multiplication by 2 pi i p(x) where
    V = 4 pi^2 p^2.  d1^2 + d2^2 applied to smooth grid functions converges to
    f'' - V f at rate O(h^2).
    """
    lam = _as_lambda(lam)
    if lam[-1] == 0.0:
        raise ValueError("lambda_{n-1} must be nonzero for a generic orbit")
    q = potential_root(spec, lam)

    def d1(f: GridFunction) -> GridFunction:
        v = f.values
        out = np.zeros_like(v)
        out[1:-1] = (v[2:] - v[:-2]) / (2.0 * f.dx)
        return GridFunction(f.xs, out)

    def d2(f: GridFunction) -> GridFunction:
        p = npoly.polyval(f.xs, q)
        return GridFunction(f.xs, 2j * np.pi * p * f.values)

    return d1, d2


# ---------------------------------------------------------------------------
# Mehler closed form
# ---------------------------------------------------------------------------

def mehler_kernel(omega: float, t: float, x, y):
    """Heat kernel of d^2/dx^2 - omega^2 x^2 at time t.

    k_t(x, y) = sqrt(omega / (2 pi sinh 2 omega t))
                * exp(-(omega/2) [(x^2+y^2) coth 2 omega t - 2 x y / sinh 2 omega t])

    Evaluated in log space so large omega*t underflows cleanly to 0 instead of
    overflowing.  Vectorized over x and y.
    """
    if omega <= 0 or t <= 0:
        raise ValueError("omega and t must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = 2.0 * omega * t
    # stable log sinh, coth, 1/sinh for s > 0
    log_sinh = s + np.log1p(-np.exp(-2.0 * s)) - np.log(2.0)
    coth = 1.0 + 2.0 / np.expm1(2.0 * s)
    inv_sinh = 2.0 * np.exp(-s) / (-np.expm1(-2.0 * s))
    log_pref = 0.5 * (np.log(omega) - np.log(2.0 * np.pi) - log_sinh)
    expo = -(omega / 2.0) * ((x**2 + y**2) * coth - 2.0 * x * y * inv_sinh)
    out = np.exp(log_pref + expo)
    if out.ndim == 0:
        return float(out)
    return out


def free_kernel(t: float, x, y):
    """Heat kernel of d^2/dx^2: (4 pi t)^{-1/2} exp(-(x-y)^2/4t)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.exp(-((x - y) ** 2) / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Hermite-Galerkin spectral solver
# ---------------------------------------------------------------------------

def hermite_functions(num: int, u) -> np.ndarray:
    """phi_k(u) for k < num, shape (num,) + shape(u).

    Recurrence runs directly on phi_k = (normalized Hermite poly) * e^{-u^2/2},
    which stays bounded, so no overflow for large |u|.
    """
    u = np.asarray(u, dtype=float)
    out = np.zeros((num,) + u.shape)
    out[0] = np.pi**-0.25 * np.exp(-(u**2) / 2.0)
    if num > 1:
        out[1] = np.sqrt(2.0) * u * out[0]
    for k in range(1, num - 1):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * u * out[k] - np.sqrt(k / (k + 1.0)) * out[k - 1]
    return out


def _log_abs_phi(k: int, u) -> np.ndarray:
    """log |phi_k(u)| by the scaled recurrence (safe far outside the classical
    region, where phi_0 itself underflows but phi_k does not)."""
    u = np.asarray(u, dtype=float)
    offset = -(u**2) / 2.0 - 0.25 * np.log(np.pi)
    prev = np.ones_like(u)
    cur = np.sqrt(2.0) * u if k >= 1 else prev
    for m in range(1, k):
        prev, cur = cur, np.sqrt(2.0 / (m + 1)) * u * cur - np.sqrt(m / (m + 1.0)) * prev
        mag = np.abs(cur)
        big = mag > 1e250
        if np.any(big):
            scale = np.where(big, mag, 1.0)
            cur = cur / scale
            prev = prev / scale
            offset = offset + np.log(scale)
    return np.log(np.maximum(np.abs(cur), 1e-300)) + offset


def auto_basis_scale(V: PolynomialPotential, cfg: SolverConfig) -> float:
    """Basis scale s = sqrt(omega_eff) from the potential's stiffness.

    Each term c_k x^k carries the frequency scale |c_k|^{2/(k+2)}; the largest
    wins.  ``energy_floor`` bounds omega_eff below so that num_modes modes span
    wavenumbers up to sqrt(energy_floor) (spanning both that energy range and
    the matching position range needs 2 M >= sqrt(E) x, hence the 0.55 E / M
    floor).
    """
    if cfg.basis_scale is not None:
        return float(cfg.basis_scale)
    omega = 0.0
    for k in range(1, V.degree + 1):
        c = abs(V.coeffs[k])
        if c > 0:
            omega = max(omega, c ** (2.0 / (k + 2.0)))
    omega = max(omega, 0.55 * cfg.energy_floor / cfg.num_modes, 1e-6)
    return float(np.sqrt(omega))


def spectral_solve(V: PolynomialPotential, cfg: SolverConfig = SolverConfig()) -> SpectralKernel:
    """Rayleigh-Ritz eigenproblem of H = -d^2/dx^2 + V in scaled Hermite functions.

    Matrix elements of V use Gauss-Hermite quadrature with enough nodes to be
    exact for the polynomial degrees involved; the kinetic part is assembled
    from the exact ladder relations.
    """
    M = cfg.num_modes
    s = auto_basis_scale(V, cfg)
    Q = cfg.quad_points if cfg.quad_points is not None else M + V.degree + 8
    if Q < M + V.degree // 2 + 1:
        raise ValueError("quad_points too small for exact polynomial quadrature")
    u = roots_hermite(Q)[0]
    # Work with the weighted functions phi_k = (normalized Hermite) e^{-u^2/2},
    # which stay bounded at any order; the matching total quadrature weight is
    # w e^{u^2} = 1 / (Q phi_{Q-1}(u)^2), evaluated in log space because the
    # recurrence passes through denormal territory at the outermost nodes.
    phi = hermite_functions(M, u)
    w_total = np.exp(-np.log(Q) - 2.0 * _log_abs_phi(Q - 1, u))
    v_mat = (phi * (w_total * V(u / s))) @ phi.T

    k_idx = np.arange(M)
    kinetic = np.diag(s**2 * (2 * k_idx + 1) / 2.0).astype(float)
    off = s**2 * (-0.5) * np.sqrt((k_idx[:-2] + 1) * (k_idx[:-2] + 2.0))
    kinetic[k_idx[:-2], k_idx[:-2] + 2] = off
    kinetic[k_idx[:-2] + 2, k_idx[:-2]] = off

    evals, evecs = eigh(kinetic + v_mat)
    return SpectralKernel(s, evals, evecs)


def eigenfunction_values(K: SpectralKernel, x) -> np.ndarray:
    """Eigenfunctions evaluated at x, shape (num_modes,) + shape(x)."""
    x = np.asarray(x, dtype=float)
    basis = np.sqrt(K.basis_scale) * hermite_functions(K.num_modes, K.basis_scale * x)
    return np.tensordot(K.eigenvectors.T, basis, axes=1)


def kernel_matrix(K: SpectralKernel, t: float, x, y):
    """k_t on the product grid: values[i, j] = k_t(x[i], y[j]), plus max tail.

    The tail is the absolute contribution of the top quarter of the modes; it
    bounds what the truncated basis can still move at this t.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    phi_x = eigenfunction_values(K, np.atleast_1d(x))
    phi_y = eigenfunction_values(K, np.atleast_1d(y))
    decay = np.exp(-K.eigenvalues * t)
    vals = (phi_x * decay[:, None]).T @ phi_y
    cut = 3 * K.num_modes // 4
    tail = np.abs(phi_x[cut:] * decay[cut:, None]).T @ np.abs(phi_y[cut:])
    return vals, float(np.max(tail))


def kernel_diag_slice(K: SpectralKernel, t: float, u, v) -> np.ndarray:
    """k_t(u[i], v[i]) for paired points (fast path for quadrature sweeps)."""
    phi_u = eigenfunction_values(K, np.asarray(u, dtype=float))
    phi_v = eigenfunction_values(K, np.asarray(v, dtype=float))
    decay = np.exp(-K.eigenvalues * t)
    return np.einsum("m...,m...,m->...", phi_u, phi_v, decay)


def kernel_eval(K: SpectralKernel, t: float, x: float, y: float) -> KernelValue:
    """Pointwise k_t(x, y) with a truncation-tail estimate.

    Warns when the tail exceeds 1e-6 of the value (t too small for the basis,
    route through the short-time expansion instead).
    """
    vals, _ = kernel_matrix(K, t, [x], [y])
    value = float(vals[0, 0])
    phi_x = eigenfunction_values(K, x)
    phi_y = eigenfunction_values(K, y)
    cut = 3 * K.num_modes // 4
    decay = np.exp(-K.eigenvalues[cut:] * t)
    tail = float(np.sum(np.abs(phi_x[cut:] * phi_y[cut:]) * decay))
    if tail > 1e-6 * max(abs(value), 1e-300):
        warnings.warn(
            f"kernel truncation tail {tail:.2e} exceeds 1e-6 of value {value:.2e} "
            f"at t={t}; increase num_modes or use the short-time expansion",
            stacklevel=2,
        )
    return KernelValue(value, tail)


def ground_energy(V: PolynomialPotential, num_modes: int = 48) -> float:
    """Cheap lowest eigenvalue of -d^2/dx^2 + V (used for truncation cutoffs)."""
    K = spectral_solve(V, SolverConfig(num_modes=num_modes))
    return float(K.eigenvalues[0])


# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------

def fd_ground_state(V: PolynomialPotential, radius: float = 8.0, num: int = 4001) -> float:
    """Dense finite-difference ground-state energy with Richardson extrapolation."""

    def once(npts):
        xs = np.linspace(-radius, radius, npts)
        hh = xs[1] - xs[0]
        diag = 2.0 / hh**2 + V(xs)
        off = -np.ones(npts - 1) / hh**2
        vals = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0), eigvals_only=True)
        return vals[0]

    coarse = once(num)
    fine = once(2 * num - 1)
    return float((4.0 * fine - coarse) / 3.0)


def _banded_from_stencils(main, sub1, sub2):
    n = main.shape[0]
    ab = np.zeros((5, n))
    ab[0, 2:] = sub2
    ab[1, 1:] = sub1
    ab[2] = main
    ab[3, :-1] = sub1
    ab[4, :-2] = sub2
    return ab


def crank_nicolson_evolve(
    V: PolynomialPotential,
    times,
    x0: float,
    radius: float = 9.0,
    num: int = 4097,
    steps_per_unit: float = 60000.0,
    warm_time: float = 2.5e-4,
    max_dt: float = 5e-5,
):
    """Crank-Nicolson propagation of du/dt = u'' - V u from an approximate
    point mass at x0; returns {time: GridFunction} at the requested times.

    Space is discretized with the fourth-order five-point Laplacian (Dirichlet
    ends; the solution is negligible there by construction).  The delta is
    mollified by an exact free-kernel warm start at ``warm_time`` multiplied by
    the symmetric-split potential factor e^{-warm_time (V(x0)+V(y))/2}, which
    carries O(warm_time^2) relative error.  Time steps ramp up geometrically
    from the warm-start scale to max(1/steps_per_unit, max_dt covering).
    """
    times = sorted(float(s) for s in np.atleast_1d(times))
    if times[0] <= warm_time:
        raise ValueError("requested times must exceed the warm start time")
    xs = np.linspace(x0 - radius, x0 + radius, num)
    h = xs[1] - xs[0]
    vv = V(xs)

    u = free_kernel(warm_time, xs, x0) * np.exp(-warm_time * (vv + V(np.asarray(x0))) / 2.0)

    # 4th-order Laplacian banded stencils, downgraded to 2nd order at the edges
    n = num
    main = np.full(n, -30.0 / (12.0 * h * h))
    sub1 = np.full(n - 1, 16.0 / (12.0 * h * h))
    sub2 = np.full(n - 2, -1.0 / (12.0 * h * h))
    main[[0, -1]] = -2.0 / (h * h)
    sub1[[0, -1]] = 1.0 / (h * h)
    sub2[[0, -1]] = 0.0
    main = main - vv

    def stepper(dt):
        a_main = 1.0 - 0.5 * dt * main
        b_main = 1.0 + 0.5 * dt * main
        ab = _banded_from_stencils(a_main, -0.5 * dt * sub1, -0.5 * dt * sub2)
        s1 = 0.5 * dt * sub1
        s2 = 0.5 * dt * sub2

        def step(vec):
            rhs = b_main * vec
            rhs[:-1] += s1 * vec[1:]
            rhs[1:] += s1 * vec[:-1]
            rhs[:-2] += s2 * vec[2:]
            rhs[2:] += s2 * vec[:-2]
            return solve_banded((2, 2), ab, rhs)

        return step

    dt_target = min(max_dt, 1.0 / steps_per_unit)
    out = {}
    t_now = warm_time
    # geometric ramp from a fraction of the warm time up to dt_target
    dt = warm_time / 8.0
    step = stepper(dt)
    for t_stop in times:
        while t_now < t_stop - 1e-15:
            if dt < dt_target and t_now > warm_time * 1.0:
                new_dt = min(dt * 1.06, dt_target)
                if new_dt != dt:
                    dt = new_dt
                    step = stepper(dt)
            if t_now + dt > t_stop:
                dt_last = t_stop - t_now
                u = stepper(dt_last)(u)
                t_now = t_stop
            else:
                u = step(u)
                t_now += dt
        out[t_stop] = GridFunction(xs, u.astype(complex))
    return out


def crank_nicolson_oracle(V: PolynomialPotential, t: float, x0: float, **kwargs) -> GridFunction:
    """Column k_t(x0, .) of the heat kernel by Crank-Nicolson time stepping."""
    return crank_nicolson_evolve(V, [t], x0, **kwargs)[float(t)]
