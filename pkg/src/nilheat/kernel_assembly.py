"""Synthesis of the hypoelliptic heat kernel from the reduced kernels by
noncommutative Fourier inversion, plus the numerical generalized Fourier
transform (GFT) and the Plancherel identity used to calibrate it.

The kernel at a group point g = (a, z) is

    p_t(a, z) = c_P * int dLambda |lambda_{n-1}|
                   int dx  e^{2 pi i sum_k c_k B_k(x, z)}  k_t^Lambda(x + a, x)

with c the dual-coefficient embedding of orbit_method, k_t^Lambda the reduced
heat kernel of schrodinger, and c_P the Plancherel calibration constant
(numerically indistinguishable from 1 in this convention; it is calibrated
rather than assumed).

Numerical strategy: the inner x integral runs first (the reduced kernel decays
like a Gaussian in x), on an interval sized per Lambda node from the kernel's
own decay; the outer Lambda integral is a tensor Gauss-Legendre rule on a box
truncated where the reduced ground-state energy satisfies E_0(Lambda) t >
``energy_cutoff``.  The last Lambda axis is split into geometric panels so the
node density can follow the x-support growth near lambda_{n-1} = 0.  Nodes
with a tiny potential (E_0 t below a switch) use the short-time product kernel
instead of the eigenexpansion; there the expansion error is quadratically
small and the Hermite basis would otherwise be too narrow.  The box is
symmetric under Lambda -> -Lambda, which conjugates the integrand, so the
value is assembled as twice the real part of the lambda_{n-1} > 0 half; the
imaginary part cancels identically and the accumulated half-space imaginary
magnitude is reported as a cancellation diagnostic instead.

Haar measure is Lebesgue measure da dz throughout.
"""

import hashlib
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial import polynomial as npoly
from numpy.polynomial.legendre import leggauss

from .lie_core import GroupElement, GroupSpec
from .orbit_method import (
    dual_coefficients,
    phase_polynomial_coeffs,
    phase_z_coefficients,
)
from .schrodinger import (
    SolverConfig,
    free_kernel,
    ground_energy,
    kernel_diag_slice,
    mehler_kernel,
    reduced_potential,
    spectral_solve,
)
from .short_time import line_average_eval

__all__ = [
    "QuadratureConfig",
    "KernelEstimate",
    "heat_kernel_gn",
    "heat_kernel_gn_many",
    "heat_kernel_h3",
    "heat_kernel_h3_many",
    "group_mass",
    "z_variances",
    "chart_from_symmetric",
    "symmetric_from_chart",
    "SeparableGaussian",
    "gft_numeric",
    "gft_matrix_separable",
    "plancherel_check",
    "calibrate_plancherel",
    "assemble_points",
]


@dataclass(frozen=True)
class QuadratureConfig:
    """Truncation and resolution knobs for the Lambda/x quadrature.

    ``lambda_box``/``lambda_nodes`` override the automatic per-axis radii and
    node counts when given (length n-1 tuples).  ``energy_cutoff`` is the
    dimensionless threshold: the Lambda box extends to where
    E_0(Lambda) * t > energy_cutoff.  ``rule`` selects the 1-d base rule.
    """

    lambda_box: tuple | None = None
    lambda_nodes: tuple | None = None
    x_radius: float | None = None
    x_nodes: int = 64
    rule: str = "tensor_gauss_legendre"
    energy_cutoff: float = 30.0
    plancherel_constant: float = 1.0
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(num_modes=96))
    force_spectral: bool = False
    x_pad: float = 7.5
    points_per_cycle: float = 7.0
    base_density: float = 4.0
    max_axis_nodes: int = 20000
    expansion_switch: float = 0.05
    max_modes: int = 640

    def __post_init__(self):
        if self.lambda_box is not None and any(r <= 0 for r in self.lambda_box):
            raise ValueError("lambda_box radii must be positive")
        if self.lambda_nodes is not None and any(c < 8 for c in self.lambda_nodes):
            raise ValueError("lambda_nodes counts must be at least 8")
        if self.x_nodes < 8:
            raise ValueError("x_nodes must be at least 8")
        if self.rule not in ("tensor_gauss_legendre", "tanh_sinh"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.x_radius is not None and self.x_radius <= 0:
            raise ValueError("x_radius must be positive")


@dataclass(frozen=True)
class KernelEstimate:
    """A computed kernel value with a truncation-error estimate.

    ``trunc_error`` aggregates the outer Lambda shell magnitude, any basis or
    domain coverage shortfalls, and the small-lambda disk bound; it is an
    estimate, not a rigorous bound.  ``diagnostics`` carries the cancellation
    ratio and resolved quadrature sizes.
    """

    value: float
    trunc_error: float
    config_hash: str
    diagnostics: dict = field(default_factory=dict, compare=False)


@lru_cache(maxsize=256)
def _leggauss_cached(num: int):
    return leggauss(num)


def _interval_rule(lo: float, hi: float, num: int, rule: str):
    if rule == "tanh_sinh":
        k = np.arange(-num // 2, num // 2 + 1)
        h = 6.0 / max(num, 2)
        tk = k * h
        u = np.tanh(0.5 * np.pi * np.sinh(tk))
        w = 0.5 * np.pi * np.cosh(tk) / np.cosh(0.5 * np.pi * np.sinh(tk)) ** 2 * h
    else:
        u, w = _leggauss_cached(num)
    mid, rad = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + rad * u, rad * w


# ---------------------------------------------------------------------------
# Kernel slices k_t^Lambda(. , .) with their own x-support logic
# ---------------------------------------------------------------------------

def _potential_radius(coeffs, level: float) -> float:
    """Largest |x| with V(x) = level (0 if V never reaches it)."""
    c = np.array(coeffs, dtype=float)
    c[0] -= level
    roots = npoly.polyroots(c)
    real = roots[np.abs(roots.imag) < 1e-9 * (1.0 + np.abs(roots.real))].real
    if real.size == 0:
        return 0.0
    return float(np.max(np.abs(real)))


def _ground_proxy(coeffs) -> float:
    """Crude lower-energy scale of -d''/dx'' + V: curvature scale plus min V."""
    omega = 0.0
    for k in range(1, len(coeffs)):
        ck = abs(coeffs[k])
        if ck > 0:
            omega = max(omega, ck ** (2.0 / (k + 2.0)))
    crit = npoly.polyroots(npoly.polyder(coeffs)) if len(coeffs) > 2 else np.array([0.0])
    crit = crit[np.abs(crit.imag) < 1e-9].real if crit.size else np.array([0.0])
    vmin = float(min(npoly.polyval(c, coeffs) for c in np.append(crit, 0.0)))
    return omega + max(vmin, 0.0)


class _Slice:
    """Per-Lambda reduced-kernel evaluator with x-support metadata."""

    def __init__(self, eval_fn, half_width, coverage_deficit=0.0):
        self.eval = eval_fn
        self.half_width = half_width
        self.coverage_deficit = coverage_deficit


def _make_slice(spec, t, lam, cfg, mode) -> _Slice:
    n = spec.n
    if mode == "mehler" or (mode == "auto" and n == 2 and not cfg.force_spectral):
        omega = 2.0 * np.pi * abs(lam[-1])
        beta = omega * np.tanh(omega * t)
        sigma = 1.0 / np.sqrt(2.0 * beta) if beta > 0 else np.inf
        half = cfg.x_pad * sigma

        def ev(u, v, _om=omega, _t=t):
            return mehler_kernel(_om, _t, u, v)

        return _Slice(ev, half)

    coeffs = reduced_potential(spec, lam).coeffs
    if mode == "short_time" or _ground_proxy(coeffs) * t < cfg.expansion_switch:
        # short-time product kernel: free Gaussian times line-averaged potential
        x_t = _potential_radius(coeffs, (cfg.energy_cutoff + 5.0) / t)
        half = x_t + cfg.x_pad * np.sqrt(t) + 1.0

        def ev(u, v, _c=coeffs, _t=t):
            return free_kernel(_t, u, v) * np.exp(-_t * line_average_eval(_c, u, v))

        return _Slice(ev, half)

    e_req = cfg.energy_cutoff / t
    solver = replace(cfg.solver, energy_floor=e_req)
    x_t = _potential_radius(coeffs, 1.25 * e_req)
    want = x_t + 1.0 + 2.0 * np.sqrt(t)
    K = spectral_solve(reduced_potential(spec, lam), solver)
    have = 0.9 * np.sqrt(2.0 * K.num_modes) / K.basis_scale
    if want > have:
        # widen the basis: feasibility needs 2 M >= sqrt(E_req) * want
        grow = int(np.ceil(0.58 * np.sqrt(e_req) * want)) + 16
        modes = min(max(grow, solver.num_modes + 16), cfg.max_modes)
        solver = replace(solver, num_modes=modes, quad_points=None)
        K = spectral_solve(reduced_potential(spec, lam), solver)
        have = 0.9 * np.sqrt(2.0 * K.num_modes) / K.basis_scale
    deficit = max(0.0, want - have) / max(want, 1e-12)

    def ev(u, v, _K=K, _t=t):
        return kernel_diag_slice(_K, _t, u, v)

    return _Slice(ev, min(want, have), coverage_deficit=deficit)


# ---------------------------------------------------------------------------
# Lambda grid: geometric panels on the last axis, plain rules elsewhere
# ---------------------------------------------------------------------------

def _b_poly_max(z, k: int, x_extent: float) -> float:
    """Sign-safe bound on |B_k(x, z)| over |x| <= x_extent."""
    if k == 0:
        return 0.0
    d = np.arange(k)
    return float(np.sum(np.abs(z[k - d - 1]) * x_extent**d
                        / np.array([factorial(int(dd)) for dd in d])))


_radius_cache: dict = {}


def _e0(spec, lam_tuple):
    key = (spec.n, lam_tuple)
    if key not in _radius_cache:
        lam = np.array(lam_tuple)
        _radius_cache[key] = ground_energy(reduced_potential(spec, lam), num_modes=40)
    return _radius_cache[key]


def _auto_radius(spec, t, cfg, axis: int, cross_radii=None) -> float:
    """Radius on one Lambda axis where the ground energy crosses the cutoff.

    Takes the minimum of E_0 over a few cross values on the other axes, so
    ridges of low-lying double wells (mixed-sign coefficients) stay inside
    the box.
    """
    n = spec.n
    target = cfg.energy_cutoff / t

    def candidates(r):
        base = np.zeros(n - 1)
        base[axis] = r
        cands = [base]
        if cross_radii is not None:
            for other in range(n - 1):
                if other == axis:
                    continue
                for frac in (0.35, -0.35, 0.75, -0.75):
                    lam = base.copy()
                    lam[other] = frac * cross_radii[other]
                    cands.append(lam)
        out = []
        for lam in cands:
            if lam[-1] == 0.0:
                lam = lam.copy()
                lam[-1] = 1e-3
            out.append(tuple(np.round(lam, 10)))
        return out

    def e0_min(r):
        return min(_e0(spec, lt) for lt in candidates(r))

    r = 1.0
    while e0_min(r) < target and r < 1e6:
        r *= 2.0
    lo, hi = (r / 2.0, r) if r > 1.0 else (1e-3, 1.0)
    for _ in range(14):
        mid = 0.5 * (lo + hi)
        if e0_min(mid) < target:
            lo = mid
        else:
            hi = mid
    return 1.15 * hi


def _x_extent_at(spec, t, cfg, lam_last: float, mode: str) -> float:
    """Representative x half-width when the last axis sits at lam_last."""
    lam = np.zeros(spec.n - 1)
    lam[-1] = max(abs(lam_last), 1e-12)
    sl = _make_slice(spec, t, lam, cfg, mode if mode != "spectral" else "auto")
    return min(float(sl.half_width), 1e4)


def _lambda_grid(spec, t, cfg, z_list, mode):
    """Half-space tensor grid: nodes (K, n-1), weights (K,), shell mask (K,).

    The last axis covers (0, R] with geometric Gauss-Legendre panels whose
    densities follow both the oscillation frequencies max|B(x, z)| over the
    panel's x-support and the requested base density; remaining axes are
    single symmetric rules.
    """
    n = spec.n
    if cfg.lambda_box is not None:
        radii = [float(r) for r in cfg.lambda_box]
        if len(radii) != n - 1:
            raise ValueError("lambda_box must have length n-1")
    else:
        radii = [None] * (n - 1)
        for axis in range(n - 1):
            radii[axis] = _auto_radius(spec, t, cfg, axis)
        if n >= 3:
            radii = [_auto_radius(spec, t, cfg, axis, cross_radii=radii) for axis in range(n - 1)]

    fixed_counts = None
    if cfg.lambda_nodes is not None:
        fixed_counts = [int(c) for c in cfg.lambda_nodes]
        if len(fixed_counts) != n - 1:
            raise ValueError("lambda_nodes must have length n-1")

    # last axis: geometric panels (0, R]
    R = radii[-1]
    num_panels = 12
    edges = [R * 0.5**k for k in range(num_panels + 1)]
    panels = [(edges[k + 1], edges[k]) for k in range(num_panels)]
    panels.append((0.0, edges[-1]))

    last_nodes, last_weights = [], []
    widest = 0.0
    for lo, hi in panels:
        x_ext = _x_extent_at(spec, t, cfg, max(lo, 0.02 * hi), mode)
        widest = max(widest, x_ext)
        freq = max((_b_poly_max(z, n, x_ext) for z in z_list), default=0.0)
        density = cfg.base_density + cfg.points_per_cycle * freq
        if fixed_counts is not None:
            density = fixed_counts[-1] / (2.0 * R)
        cnt = int(np.clip(np.ceil((hi - lo) * density), 6, cfg.max_axis_nodes))
        xs, ws = _interval_rule(lo, hi, cnt, cfg.rule)
        last_nodes.append(xs)
        last_weights.append(ws)
    last_nodes = np.concatenate(last_nodes)
    last_weights = np.concatenate(last_weights)

    other_axes = []
    for axis in range(n - 2):
        k = axis + 1  # B_k couples to lambda_k for k <= n-2
        freq = max((_b_poly_max(z, k, widest) for z in z_list), default=0.0)
        density = cfg.base_density + cfg.points_per_cycle * freq
        cnt = int(np.clip(np.ceil(2.0 * radii[axis] * density), 16, cfg.max_axis_nodes))
        if fixed_counts is not None:
            cnt = fixed_counts[axis]
        xs, ws = _interval_rule(-radii[axis], radii[axis], cnt, cfg.rule)
        other_axes.append((xs, ws))

    grids = [ax[0] for ax in other_axes] + [last_nodes]
    wgts = [ax[1] for ax in other_axes] + [last_weights]
    mesh = np.meshgrid(*grids, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*wgts, indexing="ij")
    weights = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)

    shell = np.zeros(nodes.shape[0], dtype=bool)
    for axis in range(n - 1):
        shell |= np.abs(nodes[:, axis]) > 0.92 * radii[axis]

    resolved = {
        "radii": [float(r) for r in radii],
        "axis_nodes": [len(g) for g in grids],
        "total_nodes": int(nodes.shape[0]),
    }
    return nodes, weights, shell, resolved


def _config_hash(spec, t, cfg, resolved, mode) -> str:
    text = repr((spec.n, float(t), cfg, sorted(resolved.items()), mode))
    return hashlib.md5(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Point assembly
# ---------------------------------------------------------------------------

def _x_rule_for(cfg, lo, hi, cycles):
    cnt = max(cfg.x_nodes, int(np.ceil(6.0 * cycles)) + 16)
    cnt = min(cnt, 2048)
    return _interval_rule(lo, hi, cnt, cfg.rule)


def assemble_points(spec: GroupSpec, t: float, points, cfg: QuadratureConfig,
                    mode: str = "auto"):
    """Assembled kernel values at several group points sharing one Lambda sweep.

    mode 'auto' picks the Mehler slice for n = 2 and the spectral/short-time
    hybrid otherwise; 'spectral' forces the eigenexpansion path at every n;
    'short_time' substitutes the product-formula kernel everywhere.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    n = spec.n
    if n == 1:
        # abelian plane: exact Gaussian
        out = []
        h = _config_hash(spec, t, cfg, {}, "abelian")
        for g in points:
            val = np.exp(-(g.a**2 + g.z[0] ** 2) / (4.0 * t)) / (4.0 * np.pi * t)
            out.append(KernelEstimate(float(val), 0.0, h))
        return out

    z_list = [g.z for g in points]
    nodes, weights, shell, resolved = _lambda_grid(spec, t, cfg, z_list, mode)
    P = len(points)
    values = np.zeros(P)
    shell_mag = np.zeros(P)
    imag_half = np.zeros(P)
    deficit_mag = np.zeros(P)

    for node, w, is_shell in zip(nodes, weights, shell):
        sl = _make_slice(spec, t, node, cfg, mode)
        dens = cfg.plancherel_constant * abs(node[-1]) * w
        for ip, g in enumerate(points):
            center = -0.5 * g.a
            half = cfg.x_radius if cfg.x_radius is not None else sl.half_width
            coeffs = phase_polynomial_coeffs(spec, node, g.z)
            probe = npoly.polyval(np.linspace(center - half, center + half, 17), coeffs)
            cycles = float(np.max(probe) - np.min(probe))
            xs, wx = _x_rule_for(cfg, center - half, center + half, cycles)
            phase = np.exp(2j * np.pi * npoly.polyval(xs, coeffs))
            kv = sl.eval(xs + g.a, xs)
            contrib = dens * np.sum(wx * phase * kv)
            values[ip] += 2.0 * contrib.real
            imag_half[ip] += contrib.imag
            if is_shell:
                shell_mag[ip] += 2.0 * abs(contrib)
            if sl.coverage_deficit > 0.0:
                deficit_mag[ip] += 2.0 * abs(contrib) * sl.coverage_deficit

    h = _config_hash(spec, t, cfg, resolved, mode)
    out = []
    for ip in range(P):
        trunc = shell_mag[ip] + deficit_mag[ip]
        diag = {
            "shell": float(shell_mag[ip]),
            "coverage": float(deficit_mag[ip]),
            "cancellation": float(abs(imag_half[ip]) / max(abs(values[ip]), 1e-300)),
            **resolved,
        }
        out.append(KernelEstimate(float(values[ip]), float(trunc), h, diag))
    return out


def heat_kernel_gn(spec: GroupSpec, t: float, g: GroupElement,
                   cfg: QuadratureConfig | None = None) -> KernelEstimate:
    """p_t(g) on the step-n group by the generic Lambda/x tensor quadrature."""
    if cfg is None:
        cfg = QuadratureConfig()
    return assemble_points(spec, t, [g], cfg)[0]


def heat_kernel_gn_many(spec: GroupSpec, t: float, points, cfg: QuadratureConfig | None = None):
    if cfg is None:
        cfg = QuadratureConfig()
    return assemble_points(spec, t, points, cfg)


# ---------------------------------------------------------------------------
# Heisenberg specialization: the x integral in closed form
# ---------------------------------------------------------------------------

def chart_from_symmetric(a: float, b: float, c: float) -> GroupElement:
    """Symmetric Heisenberg coordinates (a, b, c) to the (a, z) chart."""
    return GroupElement(a, np.array([b, c + 0.5 * a * b]))


def symmetric_from_chart(g: GroupElement):
    a, b = g.a, g.z[0]
    return a, b, float(g.z[1] - 0.5 * a * b)


def _h3_integrand(lam, t, a, b, c):
    """Integrand of the 1-d Heisenberg formula at lambda > 0 (vectorized).

    The Mehler slice is a Gaussian in x, so its x integral against the linear
    phase is exact; folding the lambda < 0 half doubles the half-line density
    |lambda|/(2 sinh) to

        (lambda / sinh(2 pi lambda t))
          * exp(-(pi lambda / 2)(a^2 + b^2) coth(2 pi lambda t))
          * cos(2 pi lambda c)

    with (a, b, c) the symmetric coordinates.
    """
    s = 2.0 * np.pi * lam * t
    log_sinh = s + np.log1p(-np.exp(-2.0 * s)) - np.log(2.0)
    lam_coth = lam * (1.0 + 2.0 / np.expm1(2.0 * s))
    expo = -0.5 * np.pi * (a**2 + b**2) * lam_coth + np.log(lam) - log_sinh
    return np.exp(expo) * np.cos(2.0 * np.pi * lam * c)


def heat_kernel_h3_many(t: float, abc: np.ndarray,
                        cfg: QuadratureConfig | None = None):
    """Heisenberg kernel at rows (a, b, c) of ``abc`` (symmetric coordinates).

    Returns (values, trunc_errors).  trunc_error is the shift under a 1.5x
    node refinement plus the cutoff tail magnitude.
    """
    if cfg is None:
        cfg = QuadratureConfig()
    abc = np.atleast_2d(np.asarray(abc, dtype=float))
    t = float(t)
    a, b, c = abc[:, 0], abc[:, 1], abc[:, 2]
    r2max = float(np.max(a**2 + b**2))
    lam_max = (cfg.energy_cutoff + 8.0) / (2.0 * np.pi * t + 0.5 * np.pi * r2max)
    if cfg.lambda_box is not None:
        lam_max = cfg.lambda_box[0]
    cmax = float(np.max(np.abs(c)))
    density = cfg.base_density + cfg.points_per_cycle * cmax
    num = int(np.clip(np.ceil(lam_max * density), 48, cfg.max_axis_nodes))
    if cfg.lambda_nodes is not None:
        num = cfg.lambda_nodes[0]

    def run(nn):
        lam, w = _interval_rule(0.0, lam_max, nn, cfg.rule)
        vals = _h3_integrand(lam[None, :], t, a[:, None], b[:, None], c[:, None])
        return vals @ w

    coarse = run(num)
    fine = run(int(num * 1.5))
    tail = np.abs(_h3_integrand(np.array([lam_max]), t, a, b, c))[..., 0] * lam_max * 0.05
    trunc = np.abs(fine - coarse) + tail
    return cfg.plancherel_constant * fine, cfg.plancherel_constant * trunc


def heat_kernel_h3(t: float, a: float, b: float, c: float,
                   cfg: QuadratureConfig | None = None) -> KernelEstimate:
    """Heisenberg kernel p_t(a, b, c) in symmetric coordinates."""
    if t <= 0:
        raise ValueError("t must be positive")
    vals, trunc = heat_kernel_h3_many(t, np.array([[a, b, c]]), cfg)
    cfg = cfg if cfg is not None else QuadratureConfig()
    h = hashlib.md5(repr(("h3", float(t), cfg)).encode()).hexdigest()[:16]
    return KernelEstimate(float(vals[0]), float(trunc[0]), h)


# ---------------------------------------------------------------------------
# Box mass (normalization check)
# ---------------------------------------------------------------------------

def _double_factorial(m: int) -> float:
    return float(np.prod(np.arange(m, 0, -2))) if m > 0 else 1.0


def z_variances(spec: GroupSpec, t: float) -> np.ndarray:
    """Exact marginal variances of (z_1..z_n) under the diffusion at time t.

    Var z_k = 2 (2k-3)!! (2t)^{k-1} t / (k ((k-1)!)^2); the a marginal is
    N(0, 2t).
    """
    out = np.empty(spec.n)
    for k in range(1, spec.n + 1):
        out[k - 1] = (
            2.0 * _double_factorial(2 * k - 3) * (2.0 * t) ** (k - 1) * t
            / (k * factorial(k - 1) ** 2)
        )
    return out


def group_mass(spec: GroupSpec, t: float, cfg: QuadratureConfig | None = None,
               sigmas: float = 5.0, a_nodes: int = 24):
    """integral of p_t over a +-sigmas-standard-deviation box, z exactly.

    The z integrals of the oscillatory phase over the box are elementary
    (products of sin(2 pi alpha_i Z_i)/(pi alpha_i) with alpha the phase's
    z-gradient), so only the (Lambda, x, a) integrals are quadratures.  The
    result approximates 1 up to the mass outside the box and the quadrature
    truncation; it exercises the same slices, measure, and phase machinery as
    the pointwise assembly.
    """
    if cfg is None:
        cfg = QuadratureConfig()
    n = spec.n
    if n < 2:
        raise ValueError("group_mass needs n >= 2")
    t = float(t)
    a_half = sigmas * np.sqrt(2.0 * t)
    z_half = sigmas * np.sqrt(z_variances(spec, t))

    corners = [z_half.copy()]
    mode = "auto"
    nodes, weights, shell, resolved = _lambda_grid(spec, t, cfg, corners, mode)

    aq, aw = _interval_rule(-a_half, a_half, a_nodes, cfg.rule)
    total = 0.0
    shell_mag = 0.0
    deficit_mag = 0.0
    for node, w, is_shell in zip(nodes, weights, shell):
        sl = _make_slice(spec, t, node, cfg, mode)
        half = min(sl.half_width + 0.5 * a_half, 1e4)
        alphas_probe = phase_z_coefficients(spec, node, np.linspace(-half, half, 17))
        cycles = float(np.sum(z_half * (np.max(alphas_probe, axis=1) - np.min(alphas_probe, axis=1))))
        xs, wx = _x_rule_for(cfg, -half, half, cycles)
        kmat = sl.eval(xs[None, :] + aq[:, None], np.broadcast_to(xs, (a_nodes, xs.size)))
        m_of_x = aw @ kmat
        alphas = phase_z_coefficients(spec, node, xs)
        sinc_prod = np.prod(2.0 * z_half[:, None] * np.sinc(2.0 * alphas * z_half[:, None]), axis=0)
        inner = float(np.sum(wx * m_of_x * sinc_prod))
        contrib = cfg.plancherel_constant * abs(node[-1]) * w * inner
        total += 2.0 * contrib
        if is_shell:
            shell_mag += 2.0 * abs(contrib)
        if sl.coverage_deficit > 0.0:
            deficit_mag += 2.0 * abs(contrib) * sl.coverage_deficit
    diag = {"shell": shell_mag, "coverage": deficit_mag, **resolved}
    return total, diag


# ---------------------------------------------------------------------------
# Numerical GFT and the Plancherel identity
# ---------------------------------------------------------------------------

def _inverse_z_matrix(spec: GroupSpec, a: float) -> np.ndarray:
    """Linear map z -> z-part of (a, z)^{-1} (triangular back-substitution)."""
    n = spec.n
    apow = a ** np.arange(n) / np.array([factorial(i) for i in range(n)])
    L = np.zeros((n, n))
    for j in range(n):
        col = np.zeros(n)
        for k in range(n):
            acc = -(1.0 if k == j else 0.0)
            for i in range(1, k + 1):
                acc -= apow[i] * col[k - i]
            col[k] = acc
        L[:, j] = col
    return L


def gft_numeric(spec: GroupSpec, lam, f, xs: np.ndarray,
                a_radius: float, z_radii, z_nodes) -> np.ndarray:
    """Matrix of the GFT operator f_hat(pi_Lambda) in the grid basis of xs.

    f is a callable f(a, z) -> float with z an (n,) array, integrable and
    supported well inside the quadrature box.  The group integral uses the
    trapezoid tensor rule: a runs over lattice multiples of the grid spacing
    (so the shift part of pi(g^{-1}) is an exact index shift) and z over a
    uniform tensor grid.  Returns M with (f_hat h)(x_i) = sum_j M[i,j] h(x_j);
    the Hilbert-Schmidt norm of the operator is the Frobenius norm of M.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    n = spec.n
    xs = np.asarray(xs, dtype=float)
    N = xs.size
    dx = xs[1] - xs[0]
    k_max = int(np.floor(a_radius / dx))
    z_axes = [np.linspace(-r, r, m) for r, m in zip(z_radii, z_nodes)]
    z_w = [ax[1] - ax[0] for ax in z_axes]
    mesh = np.meshgrid(*z_axes, indexing="ij")
    zflat = np.stack([m.ravel() for m in mesh], axis=-1)
    wz = float(np.prod(z_w))
    alphas = phase_z_coefficients(spec, lam, xs)  # (n, N)

    M = np.zeros((N, N), dtype=complex)
    for k in range(-k_max, k_max + 1):
        a = k * dx
        fvals = np.array([f(a, z) for z in zflat])
        if not np.any(fvals):
            continue
        L = _inverse_z_matrix(spec, a)
        gammas = L.T @ alphas  # (n, N): phase coefficients against original z
        phase = np.exp(2j * np.pi * (zflat @ gammas))  # (Nz, N)
        F = wz * (fvals @ phase)  # (N,)
        rows = np.arange(max(0, k), min(N, N + k))
        cols = rows - k
        M[rows, cols] += dx * F[rows]
    return M


@dataclass(frozen=True)
class SeparableGaussian:
    """f(a, z) = amplitude * exp(-a^2/2 s_a^2) * prod_i exp(-z_i^2/2 s_i^2)."""

    sigmas: tuple
    amplitude: float = 1.0

    def __call__(self, a, z):
        s = np.asarray(self.sigmas, dtype=float)
        return self.amplitude * np.exp(-0.5 * (a / s[0]) ** 2) * np.exp(
            -0.5 * np.sum((np.asarray(z) / s[1:]) ** 2)
        )

    def squared_integral(self) -> float:
        s = np.asarray(self.sigmas, dtype=float)
        return float(self.amplitude**2 * np.prod(s * np.sqrt(np.pi)))


def gft_matrix_separable(spec: GroupSpec, lam, gauss: SeparableGaussian,
                         xs: np.ndarray, a_sigmas: float = 6.0) -> np.ndarray:
    """GFT matrix for a separable Gaussian; the z integrals are exact
    Gaussian Fourier transforms, the a integral is the lattice trapezoid."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    s = np.asarray(gauss.sigmas, dtype=float)
    xs = np.asarray(xs, dtype=float)
    N = xs.size
    dx = xs[1] - xs[0]
    k_max = int(np.floor(a_sigmas * s[0] / dx))
    alphas = phase_z_coefficients(spec, lam, xs)
    M = np.zeros((N, N), dtype=complex)
    zconst = gauss.amplitude * np.prod(s[1:] * np.sqrt(2.0 * np.pi))
    for k in range(-k_max, k_max + 1):
        a = k * dx
        fa = np.exp(-0.5 * (a / s[0]) ** 2)
        L = _inverse_z_matrix(spec, a)
        gammas = L.T @ alphas
        F = zconst * fa * np.exp(-2.0 * np.pi**2 * np.sum((s[1:, None] * gammas) ** 2, axis=0))
        rows = np.arange(max(0, k), min(N, N + k))
        M[rows, rows - k] += dx * F[rows]
    return M


def _gft_kernel_separable(spec: GroupSpec, lam, gauss: SeparableGaussian, x, a):
    """Integral kernel K(x, x - a) of f_hat(pi_Lambda) for a separable Gaussian.

    The z integral of f against the linear phase is an exact Gaussian Fourier
    transform; only the a-direction remains.  ``x`` and ``a`` broadcast.
    """
    s = np.asarray(gauss.sigmas, dtype=float)
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    alphas = phase_z_coefficients(spec, lam, x)  # (n,) + x.shape
    zconst = gauss.amplitude * np.prod(s[1:] * np.sqrt(2.0 * np.pi))
    if a.ndim == 0:
        L = _inverse_z_matrix(spec, float(a))
        gam = np.tensordot(L.T, alphas, axes=1)
        expo = 2.0 * np.pi**2 * np.sum((s[1:].reshape((-1,) + (1,) * (gam.ndim - 1)) * gam) ** 2, axis=0)
        return zconst * np.exp(-0.5 * (a / s[0]) ** 2) * np.exp(-expo)
    raise ValueError("a must be scalar here")


def _alpha_poly_coeffs(spec: GroupSpec, lam):
    """y-polynomial coefficients of each phase gradient alpha_j, j = 1..n."""
    c = dual_coefficients(spec, lam)
    n = spec.n
    out = []
    for j in range(1, n + 1):
        out.append(np.array([c[j + d - 1] / factorial(d) for d in range(n - j + 1)]))
    return out


def _crossing_width(coeffs, root: float, sigma: float, level: float = 4.8) -> float:
    """Smallest delta with 2 pi sigma |alpha(root +- delta)| above ``level``.

    Robust at degenerate roots where the linear slope vanishes.
    """
    deltas = np.logspace(-6, 6, 121)
    vals = np.maximum(
        np.abs(npoly.polyval(root + deltas, coeffs)),
        np.abs(npoly.polyval(root - deltas, coeffs)),
    )
    hit = np.nonzero(2.0 * np.pi * sigma * vals > level)[0]
    return float(deltas[hit[0]]) if hit.size else 1e6


def _y_panels(spec: GroupSpec, lam, gauss: SeparableGaussian):
    """y-integration panels resolving every root window of the phase gradients.

    The HS integrand prod_j exp(-4 pi^2 sigma_j^2 alpha_j(y)^2) peaks wherever
    a dominant gradient vanishes; with mixed-sign coefficients these are
    narrow rings far from the origin.  Window edges become panel breakpoints
    so a fixed-order rule per panel resolves both the rings and the broad
    central mass.
    """
    s = np.asarray(gauss.sigmas, dtype=float)
    coeff_list = _alpha_poly_coeffs(spec, lam)
    lam_last = abs(np.atleast_1d(lam)[-1])
    base = 4.8 / (2.0 * np.pi * max(lam_last, 1e-12) * s[spec.n - 1])
    base = min(base, 1e6)
    windows = [(-base, base)]
    for j, coeffs in enumerate(coeff_list, start=1):
        if len(coeffs) < 2:
            continue
        roots = npoly.polyroots(coeffs)
        real = roots[np.abs(roots.imag) < 1e-9 * (1.0 + np.abs(roots.real))].real
        for r in np.unique(np.round(real, 12)):
            w = _crossing_width(coeffs, float(r), s[j])
            windows.append((float(r) - w, float(r) + w))
    # union of windows, then panelize at every window edge inside each piece
    intervals = sorted(windows)
    merged = [list(intervals[0])]
    for lo, hi in intervals[1:]:
        if lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    edges = sorted({e for w in windows for e in w})
    panels = []
    for lo, hi in merged:
        cuts = [lo] + [e for e in edges if lo < e < hi] + [hi]
        panels.extend((cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1))
    return panels


def _hs_norm_sq(spec: GroupSpec, lam, gauss: SeparableGaussian,
                y_nodes: int = 96) -> float:
    """||f_hat(pi_Lambda)||_HS^2.

    The kernel factors exactly as K(y+u, y) = f_a(u) G(y) (the phase gradient
    depends on the second argument alone), so the u integral is elementary and
    only G needs quadrature, over the root panels of ``_y_panels``.
    """
    s = np.asarray(gauss.sigmas, dtype=float)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    u_factor = s[0] * np.sqrt(np.pi)
    total = 0.0
    for lo, hi in _y_panels(spec, lam, gauss):
        yq, yw = _interval_rule(lo, hi, y_nodes, "tensor_gauss_legendre")
        g = _gft_kernel_separable(spec, lam, gauss, yq, 0.0)
        total += float(np.sum(yw * np.abs(g) ** 2))
    return u_factor * total


def plancherel_check(spec: GroupSpec, gauss: SeparableGaussian,
                     nodes_per_axis: int = 48, lambda_min_frac: float = 2e-4):
    """Both sides of the Plancherel identity for a separable Gaussian.

    Returns (lhs, rhs): lhs = ||f||_2^2 (elementary), rhs the Lambda
    quadrature of ||f_hat||_HS^2 |lambda_{n-1}| with no calibration constant
    applied.  The Hilbert-Schmidt norms integrate the exact z-transformed
    kernel over (x - y, y) grids whose extent follows the kernel's spread.
    The lambda_j boxes for j <= n-2 widen as |lambda_{n-1}| shrinks: the
    Hilbert-Schmidt mass in lambda_j is centered where the phase gradient
    alpha_j(y) vanishes, which drifts like lambda_{n-1} y^{n-j} over the
    kernel's y-support.
    """
    n = spec.n
    s = np.asarray(gauss.sigmas, dtype=float)
    r_last = 5.5 / (2.0 * np.pi * s[n])
    lam_lo = lambda_min_frac * r_last
    last_xs, last_ws = _interval_rule(lam_lo, r_last, nodes_per_axis, "tensor_gauss_legendre")
    last_ws = 2.0 * last_ws  # fold the lambda -> -lambda half

    def inner_axis_rule(j, lam_last, drifts):
        """Panel rule for the lambda_j axis: the Hilbert-Schmidt mass drifts to
        -sign(lam_last) * [0, drift] with an integrable edge at 0, so the
        drift side is covered by geometric panels down to the base scale."""
        base = 5.5 / (2.0 * np.pi * s[j])
        drift = drifts[j]
        pieces = [(-base, base)]
        side = -np.sign(lam_last)
        d = 1.6 * drift
        while d > base:
            lo, hi = sorted((side * d, side * max(d / 2.0, base)))
            pieces.append((lo, hi))
            d /= 2.0
        nodes, weights = [], []
        per = max(nodes_per_axis // 2, 16)
        for lo, hi in pieces:
            xs, ws = _interval_rule(lo, hi, per, "tensor_gauss_legendre")
            nodes.append(xs)
            weights.append(ws)
        return np.concatenate(nodes), np.concatenate(weights)

    def slice_value(lam_last):
        if n == 2:
            return lam_last * _hs_norm_sq(spec, np.array([lam_last]), gauss)
        y_ext = 6.5 / (2.0 * np.pi * abs(lam_last) * s[n - 1])
        drifts = {}
        for j in range(n - 2, 0, -1):
            drift = abs(lam_last) * y_ext ** (n - j) / factorial(n - j)
            for k in range(j + 1, n - 1):
                drift += drifts[k] * y_ext ** (k - j) / factorial(k - j)
            drifts[j] = drift
        rules = [inner_axis_rule(j, lam_last, drifts) for j in range(1, n - 1)]
        mesh = np.meshgrid(*[r[0] for r in rules], indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        wmesh = np.meshgrid(*[r[1] for r in rules], indexing="ij")
        wts = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)
        acc = 0.0
        for p, w in zip(pts, wts):
            lam = np.append(p, lam_last)
            acc += w * abs(lam_last) * _hs_norm_sq(spec, lam, gauss)
        return acc

    rhs = 0.0
    for lam_last, w in zip(last_xs, last_ws):
        rhs += w * slice_value(float(lam_last))
    # the integrand is flat near lambda_{n-1}=0: close the dropped sliver
    rhs += 2.0 * lam_lo * slice_value(lam_lo)
    return gauss.squared_integral(), rhs


def calibrate_plancherel(spec: GroupSpec, gauss: SeparableGaussian | None = None,
                         **kwargs) -> float:
    """Plancherel constant c_P = ||f||^2 / int ||f_hat||^2 |lambda| dLambda."""
    if gauss is None:
        gauss = SeparableGaussian((1.0,) * (spec.n + 1))
    lhs, rhs = plancherel_check(spec, gauss, **kwargs)
    return lhs / rhs
