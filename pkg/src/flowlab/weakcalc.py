"""Weak-form machinery: bump test functions, quadrature clouds, and the
evaluators for every distributional identity the package checks.

All integrals are composite-midpoint sums against a ``PointCloud`` whose
weights add up to the box volume.  Every evaluator runs on a ladder of
grid resolutions; the stacked differences between levels form the
quadrature error estimate, and pass/fail thresholds compose that estimate
with the caller's integrator budget.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .convergence import ConvergenceReport
from .errors import (
    CapabilityError,
    CoverageError,
    InvalidInputError,
    NumericError,
    ParameterError,
    ResolutionError,
)
from .fields import Box, bump_profile, bump_profile_deriv_over_u
from .flow import flow_error_budget, flow_points


# ---------------------------------------------------------------------------
# clouds

@dataclass(frozen=True, eq=False)
class PointCloud:
    """Quadrature-weighted sample points over a box.

    ``weights`` are positive and sum to the box volume, so weighted sums
    approximate Lebesgue integrals.  Grid clouds regenerate
    deterministically from (box, resolution, seed); random clouds from the
    seed alone.
    """

    points: np.ndarray
    weights: np.ndarray
    box: Box
    seed: int = 0
    kind: str = "grid"
    resolution: int = 0

    def __post_init__(self):
        if np.any(self.weights <= 0.0):
            raise ParameterError("cloud weights must be positive")

    @property
    def size(self):
        return self.points.shape[0]

    def norm(self, values, q):
        """Weighted L^q norm; rows may be scalars or vectors (Euclid per row)."""
        if q < 1:
            raise ParameterError(f"norm exponent must be >= 1, got {q}")
        v = np.asarray(values, dtype=float)
        mag = np.abs(v) if v.ndim == 1 else np.linalg.norm(v, axis=1)
        return float(np.sum(self.weights * mag ** q) ** (1.0 / q))


def grid_cloud(box, resolution, seed=0):
    """Midpoint-rule cloud: resolution^dim cells, one point per cell center."""
    if resolution < 1:
        raise ParameterError(f"resolution must be >= 1, got {resolution}")
    axes = []
    for i in range(box.dim):
        h = box.extents[i] / resolution
        axes.append(box.lo[i] + (np.arange(resolution) + 0.5) * h)
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    cell = box.volume / resolution ** box.dim
    return PointCloud(
        points=pts,
        weights=np.full(pts.shape[0], cell),
        box=box,
        seed=seed,
        kind="grid",
        resolution=resolution,
    )


def random_cloud(box, n, seed=0, margin=0.0):
    """Uniform random cloud with equal weights summing to the box volume."""
    rng = np.random.default_rng(seed)
    pts = box.random_points(n, rng, margin=margin)
    return PointCloud(
        points=pts,
        weights=np.full(n, box.volume / n),
        box=box,
        seed=seed,
        kind="random",
        resolution=0,
    )


def refine(cloud):
    """The same grid cloud at doubled resolution (for error estimates)."""
    if cloud.kind != "grid":
        raise ParameterError("only grid clouds can be refined")
    return grid_cloud(cloud.box, 2 * cloud.resolution, seed=cloud.seed)


def coarsen(cloud):
    """The same grid cloud at halved resolution."""
    if cloud.kind != "grid":
        raise ParameterError("only grid clouds can be coarsened")
    return grid_cloud(cloud.box, max(4, cloud.resolution // 2), seed=cloud.seed)


def _estimate_ladder(cloud):
    """Three resolutions for the error estimate; the reported value comes
    from the finest, the estimate stacks the two inter-level differences.
    One difference alone can be accidentally small before the asymptotic
    regime, especially for integrands with derivative kinks."""
    return (coarsen(cloud), cloud, refine(cloud))


def _cascade(vals):
    value = vals[-1]
    est = abs(vals[-1] - vals[-2]) + abs(vals[-2] - vals[-3])
    return value, est


def integrate(f, cloud):
    """Composite quadrature sum(weights * f(points)); f maps (N, d) -> (N,)."""
    vals = np.asarray(f(cloud.points), dtype=float)
    out = float(np.sum(cloud.weights * vals))
    if not math.isfinite(out):
        raise NumericError("integrand produced a non-finite value")
    return out


def integrate_with_estimate(f, cloud):
    """Quadrature value on the refined cloud plus a stacked two-difference
    error estimate from the resolution ladder."""
    return _cascade([integrate(f, cl) for cl in _estimate_ladder(cloud)])


# ---------------------------------------------------------------------------
# bump test functions

@dataclass(frozen=True, eq=False)
class BumpTest:
    """Vector-valued bump phi(z) = v * eta(|z - c| / r) with analytic gradient.

    eta is the standard smooth bump; phi and its gradient vanish
    identically outside the closed ball B_r(c).
    """

    center: np.ndarray
    radius: float
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        d = np.asarray(self.direction, dtype=float)
        nrm = np.linalg.norm(d)
        if nrm == 0.0 or self.radius <= 0.0:
            raise ParameterError("bump needs a nonzero direction and positive radius")
        object.__setattr__(self, "direction", d / nrm)

    @property
    def dim(self):
        return self.center.size

    def phi(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        u = np.linalg.norm(pts - self.center, axis=1) / self.radius
        return bump_profile(u)[:, None] * self.direction

    def grad(self, pts):
        """D phi with row i the gradient of component i: v_i eta'(u) (z-c)_j / (r^2 u)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rel = pts - self.center
        u = np.linalg.norm(rel, axis=1) / self.radius
        fac = bump_profile_deriv_over_u(u) / self.radius ** 2
        return self.direction[None, :, None] * (fac[:, None] * rel)[:, None, :]

    def require_covered(self, cloud):
        lo_ok = np.all(self.center - self.radius >= cloud.box.lo - 1e-12)
        hi_ok = np.all(self.center + self.radius <= cloud.box.hi + 1e-12)
        if not (lo_ok and hi_ok):
            raise CoverageError(
                f"bump at {self.center.tolist()} r={self.radius} not covered by {cloud.box}"
            )


def bump_panel(box, seed=3, n_random=4):
    """The reproducible test-function panel: 8 fixed bumps (4 centers x 2
    directions) plus ``n_random`` seeded random ones, all supported inside
    the box."""
    half = float(np.min(box.extents)) / 2.0
    c0 = (box.lo + box.hi) / 2.0
    fixed_centers = [
        c0,
        c0 + half * np.array([0.45, 0.15]),
        c0 + half * np.array([-0.35, 0.30]),
        c0 + half * np.array([0.20, -0.45]),
    ]
    fixed_radius = [0.50 * half, 0.35 * half, 0.35 * half, 0.35 * half]
    panel = []
    for c, r in zip(fixed_centers, fixed_radius):
        for direction in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
            panel.append(BumpTest(center=c, radius=r, direction=direction))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        c = c0 + 0.5 * half * (2.0 * rng.random(box.dim) - 1.0)
        r = half * (0.25 + 0.15 * rng.random())
        theta = 2.0 * math.pi * rng.random()
        v = np.array([math.cos(theta), math.sin(theta)])
        panel.append(BumpTest(center=c, radius=r, direction=v))
    return panel


# ---------------------------------------------------------------------------
# reports

@dataclass
class WeakReport:
    """One weak-form evaluation: value, quadrature error estimate, verdict."""

    value: float
    quadrature_error_estimate: float
    tolerance: float
    verdict: bool

    def __post_init__(self):
        if self.quadrature_error_estimate < 0.0:
            raise NumericError("error estimate must be nonnegative")

    def to_record(self, experiment, params):
        return {
            "experiment": experiment,
            "params": params,
            "value": self.value,
            "error_estimate": self.quadrature_error_estimate,
            "tolerance": self.tolerance,
            "verdict": "pass" if self.verdict else "fail",
        }


# ---------------------------------------------------------------------------
# pairings

def _divergence_values(Y, pts):
    if Y.div is not None:
        return Y.div(pts)
    from .fields import fd_divergence

    return fd_divergence(Y, pts)


def _pairing(F_vals, f_vals, Y, phi, cloud):
    """sum of (F, Dphi Y) + div(Y) (F, phi) + (f, phi) against the cloud."""
    pts = cloud.points
    phiv = phi.phi(pts)
    dphi = phi.grad(pts)
    Yv = Y.eval(pts)
    divv = _divergence_values(Y, pts)
    dphi_y = np.einsum("nij,nj->ni", dphi, Yv)
    integrand = (
        np.sum(F_vals * dphi_y, axis=1)
        + divv * np.sum(F_vals * phiv, axis=1)
        + np.sum(f_vals * phiv, axis=1)
    )
    out = float(np.sum(cloud.weights * integrand))
    if not math.isfinite(out):
        raise NumericError("weak pairing produced a non-finite value")
    return out


def weak_lie_residual(F_map, Y, f_map, phi, cloud, budget=0.0):
    """Residual of the weak directional-derivative identity.

    For maps F with candidate derivative f along the field Y, computes
    integral of (F, Dphi Y) + div(Y)(F, phi) + (f, phi), which vanishes
    exactly when f is the weak derivative of F in direction Y.  Evaluated
    at two resolutions; tolerance = quadrature estimate + ``budget``.
    """
    phi.require_covered(cloud)
    vals = [
        _pairing(F_map(cl.points), f_map(cl.points), Y, phi, cl)
        for cl in _estimate_ladder(cloud)
    ]
    value, err = _cascade(vals)
    tol = err + budget
    return WeakReport(
        value=value,
        quadrature_error_estimate=err,
        tolerance=tol,
        verdict=abs(value) <= tol,
    )


def _flow_map(X, cfg, override):
    if override is not None:
        return override
    return lambda pts, t: flow_points(X, cfg, pts, t)


def _transport_reports(Y, moved_tuple, phis, clouds, budget):
    reports = []
    for phi in phis:
        phi.require_covered(clouds[1])
        vals = [
            _pairing(moved, Y.eval(moved), Y, phi, cl)
            for moved, cl in zip(moved_tuple, clouds)
        ]
        value, err = _cascade(vals)
        tol = err + budget
        reports.append(
            WeakReport(
                value=value,
                quadrature_error_estimate=err,
                tolerance=tol,
                verdict=abs(value) <= tol,
            )
        )
    return reports


def eval_Tt_panel(X, Y, cfg, t, phis, cloud, flow_map=None, budget=None):
    """eval_Tt against a whole panel of bumps, flowing each cloud only once."""
    fm = _flow_map(X, cfg, flow_map)
    if budget is None:
        budget = flow_error_budget(cfg, t, cloud.box.diameter, X, Y)
    clouds = _estimate_ladder(cloud)
    moved = tuple(fm(cl.points, t) for cl in clouds)
    return _transport_reports(Y, moved, phis, clouds, budget)


def eval_Tt(X, Y, cfg, t, phi, cloud, flow_map=None, budget=None):
    """The order-1 pairing whose vanishing (for all phi and t) encodes that
    the flow of X transports Y onto itself:

        integral of (Y(Phi_t), phi) + (Phi_t, Dphi Y) + div(Y)(phi, Phi_t).

    ``flow_map`` overrides the integrator with a closed-form flow.
    """
    return eval_Tt_panel(X, Y, cfg, t, [phi], cloud, flow_map=flow_map, budget=budget)[0]


def eval_Tts_panel(X, Y, cfg, t, s, phis, cloud, flow_map_x=None, flow_map_y=None,
                   budget=None):
    """eval_Tts against a whole panel of bumps, flowing each cloud only once."""
    fx = _flow_map(X, cfg, flow_map_x)
    fy = _flow_map(Y, cfg, flow_map_y)
    if budget is None:
        budget = flow_error_budget(cfg, abs(t) + abs(s), cloud.box.diameter, X, Y)
    clouds = _estimate_ladder(cloud)
    moved = tuple(fx(fy(cl.points, s), t) for cl in clouds)
    return _transport_reports(Y, moved, phis, clouds, budget)


def eval_Tts(X, Y, cfg, t, s, phi, cloud, flow_map_x=None, flow_map_y=None, budget=None):
    """Same pairing with the composed flow Phi_t^X(Phi_s^Y(z)) in place of
    Phi_t^X; at s = 0 it reproduces eval_Tt exactly."""
    return eval_Tts_panel(
        X, Y, cfg, t, s, [phi], cloud,
        flow_map_x=flow_map_x, flow_map_y=flow_map_y, budget=budget,
    )[0]


@dataclass
class DerivativeAtZero:
    """Centered time-derivative of the T pairing at 0 against the bracket pairing."""

    derivative_estimate: float
    bracket_pairing: float
    quadrature_error_estimate: float

    def __iter__(self):
        return iter((self.derivative_estimate, self.bracket_pairing))


def dTt_dt_zero(X, Y, cfg, phi, cloud, delta, flow_map=None, fd_step=None):
    """(T_delta - T_-delta) / (2 delta) against integral of ([X, Y], phi).

    The two agree up to O(delta^2) plus quadrature error for smooth pairs.
    """
    from .bracket import lie_bracket

    plus = eval_Tt(X, Y, cfg, delta, phi, cloud, flow_map=flow_map, budget=0.0)
    minus = eval_Tt(X, Y, cfg, -delta, phi, cloud, flow_map=flow_map, budget=0.0)
    deriv = (plus.value - minus.value) / (2.0 * delta)
    deriv_err = (plus.quadrature_error_estimate + minus.quadrature_error_estimate) / (
        2.0 * delta
    )

    kwargs = {} if fd_step is None else {"h": fd_step}

    def integrand(pts):
        br = lie_bracket(X, Y, pts, **kwargs)
        return np.sum(br * phi.phi(pts), axis=1)

    pairing, pair_err = integrate_with_estimate(integrand, cloud)
    return DerivativeAtZero(
        derivative_estimate=deriv,
        bracket_pairing=pairing,
        quadrature_error_estimate=deriv_err + pair_err,
    )


# ---------------------------------------------------------------------------
# renormalization

@dataclass(frozen=True, eq=False)
class CompactMap:
    """A C^1 map on value space with analytic Jacobian, for renormalization."""

    eval: Callable
    jac: Callable


def identity_inside_cutoff(r_cut):
    """g(u) = chi(|u|) u: the identity on |u| <= r_cut, smoothly cut off."""
    from .fields import radial_cutoff

    chi, chi_prime = radial_cutoff(r_cut)

    def ev(u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return chi(np.linalg.norm(u, axis=1))[:, None] * u

    def jc(u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        r = np.linalg.norm(u, axis=1)
        c = chi(r)
        cp = chi_prime(r)
        rhat = u / np.maximum(r, 1e-300)[:, None]
        eye = np.eye(u.shape[1])
        return c[:, None, None] * eye + (cp[:, None] * u)[:, :, None] * rhat[:, None, :]

    return CompactMap(eval=ev, jac=jc)


def quadratic_inside_cutoff(r_cut):
    """g(u) = chi(|u|) (u_1^2, u_1 u_2): a genuinely nonlinear compact map."""
    from .fields import radial_cutoff

    chi, chi_prime = radial_cutoff(r_cut)

    def core(u):
        return np.stack([u[:, 0] ** 2, u[:, 0] * u[:, 1]], axis=1)

    def core_jac(u):
        n = u.shape[0]
        J = np.zeros((n, 2, 2))
        J[:, 0, 0] = 2.0 * u[:, 0]
        J[:, 1, 0] = u[:, 1]
        J[:, 1, 1] = u[:, 0]
        return J

    def ev(u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return chi(np.linalg.norm(u, axis=1))[:, None] * core(u)

    def jc(u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        r = np.linalg.norm(u, axis=1)
        c = chi(r)
        cp = chi_prime(r)
        rhat = u / np.maximum(r, 1e-300)[:, None]
        return (
            c[:, None, None] * core_jac(u)
            + (cp[:, None] * core(u))[:, :, None] * rhat[:, None, :]
        )

    return CompactMap(eval=ev, jac=jc)


def renorm_residual(a_map, b, f_map, g, phi, cloud, budget=0.0, precondition_slack=10.0):
    """Residual of the renormalization identity for div(a (x) b) = f:

        integral of (g(a), Dphi b) + (Dg(a) f - div(b) (Dg(a) a - g(a)), phi).

    The input triple must itself satisfy div(a (x) b) = f weakly; that
    precondition is checked first with the same quadrature and
    ``precondition_slack`` times its tolerance, and failure raises
    InvalidInputError.
    """
    phi.require_covered(cloud)

    def precond(cl):
        a_vals = a_map(cl.points)
        f_vals = f_map(cl.points)
        bv = b.eval(cl.points)
        dphi_b = np.einsum("nij,nj->ni", phi.grad(cl.points), bv)
        integrand = np.sum(a_vals * dphi_b, axis=1) + np.sum(
            f_vals * phi.phi(cl.points), axis=1
        )
        return float(np.sum(cl.weights * integrand))

    ladder = _estimate_ladder(cloud)
    pre_val, pre_est = _cascade([precond(cl) for cl in ladder])
    pre_tol = pre_est + budget + 1e-12
    if abs(pre_val) > precondition_slack * pre_tol:
        raise InvalidInputError(
            f"inputs do not satisfy the tensor-divergence identity: "
            f"residual {pre_val:.3g} > {precondition_slack} x {pre_tol:.3g}"
        )

    def main(cl):
        pts = cl.points
        a_vals = a_map(pts)
        f_vals = f_map(pts)
        bv = b.eval(pts)
        divb = _divergence_values(b, pts)
        ga = g.eval(a_vals)
        dga = g.jac(a_vals)
        dphi_b = np.einsum("nij,nj->ni", phi.grad(pts), bv)
        dga_f = np.einsum("nij,nj->ni", dga, f_vals)
        dga_a = np.einsum("nij,nj->ni", dga, a_vals)
        second = dga_f - divb[:, None] * (dga_a - ga)
        integrand = np.sum(ga * dphi_b, axis=1) + np.sum(
            second * phi.phi(pts), axis=1
        )
        return float(np.sum(cl.weights * integrand))

    value, err = _cascade([main(cl) for cl in ladder])
    tol = err + budget
    return WeakReport(
        value=value,
        quadrature_error_estimate=err,
        tolerance=tol,
        verdict=abs(value) <= tol,
    )


# ---------------------------------------------------------------------------
# mollification commutator

def commutator_residual(u_map, b, kernel, cloud, reflect_kernel=False):
    """Weighted L^1 norm, over interior cloud points, of the three-term
    smoothing commutator

        sum_j (u * d_j rho)(x) b_j(x) + (u * rho)(x) div b(x)
            - sum_j ((u b_j) * d_j rho)(x),

    with all convolutions discrete on the cloud's lattice (zero-padded) and
    the derivative kernels sampled analytically.  The sampled smoothing
    kernel is normalized to unit discrete mass (as in ``mollify``) and each
    derivative kernel to first moment -1, the discrete counterparts of the
    continuous identities; without these the lattice quadrature error of
    the kernel moments floors the residual.  ``reflect_kernel`` flips the
    sampled kernels; by evenness of the profile the value is unchanged.
    """
    from scipy.signal import fftconvolve

    if cloud.kind != "grid":
        raise ParameterError("commutator_residual needs a grid cloud")
    res = cloud.resolution
    spacing = float(cloud.box.extents[0]) / res
    if np.any(np.abs(cloud.box.extents / res - spacing) > 1e-12):
        raise ParameterError("commutator_residual needs a square lattice")
    if kernel.epsilon < 2.0 * spacing:
        raise ResolutionError(
            f"lattice spacing {spacing} too coarse for kernel scale {kernel.epsilon}"
        )

    dim = cloud.box.dim
    shape = (res,) * dim
    u_vals = np.asarray(u_map(cloud.points), dtype=float).reshape(shape)
    b_vals = b.eval(cloud.points)
    div_vals = _divergence_values(b, cloud.points).reshape(shape)

    rho = kernel.grid_kernel(spacing, normalized=True)
    offsets, _ = kernel._offsets(spacing)
    partials = []
    for j in range(dim):
        pj = kernel.grid_kernel_partial(spacing, j)
        moment = float(np.sum(pj.ravel() * offsets[:, j]))
        partials.append(pj / (-moment))
    if reflect_kernel:
        # x -> rho(-x): even kernel, so only the array layout (and with it
        # the summation order) changes; derivative kernels pick up a sign
        rho = np.flip(rho)
        partials = [-np.flip(p) for p in partials]

    residual = fftconvolve(u_vals, rho, mode="same") * div_vals
    for j in range(dim):
        bj = b_vals[:, j].reshape(shape)
        residual += fftconvolve(u_vals, partials[j], mode="same") * bj
        residual -= fftconvolve(u_vals * bj, partials[j], mode="same")

    interior = cloud.box.contains(cloud.points, margin=kernel.epsilon)
    if not np.any(interior):
        raise ParameterError("no interior points at distance > epsilon from the boundary")
    value = float(
        np.sum(cloud.weights[interior] * np.abs(residual.ravel()[interior]))
    )
    if not math.isfinite(value):
        raise NumericError("commutator residual is non-finite")
    return value


# ---------------------------------------------------------------------------
# incremental quotients and convergence in measure

def incremental_quotient(X, Y, cfg, cloud, t, h, q, flow_map_x=None, flow_map_y=None,
                         reference_field=None):
    """Difference quotient of the X-flow along the Y-flow, and its L^q
    distance from the transported field:

        D_h(z) = (Phi_t^X(Phi_h^Y(z)) - Phi_t^X(z)) / h,
        distance = || D_h - Y(Phi_t^X(.)) ||_(L^q, cloud).

    ``reference_field`` replaces Y in the comparison (used when the flows
    integrate a smoothed proxy and the comparison should be against the
    same proxy).  Returns (quotient samples, distance).
    """
    if h == 0.0:
        raise ParameterError("quotient step h must be nonzero")
    fx = _flow_map(X, cfg, flow_map_x)
    fy = _flow_map(Y, cfg, flow_map_y)
    base = fx(cloud.points, t)
    shifted = fx(fy(cloud.points, h), t)
    quotient = (shifted - base) / h
    ref = (reference_field or Y).eval(base)
    distance = cloud.norm(quotient - ref, q)
    return quotient, distance


def fh_measure_trend(f, Y, cfg, R, eps_level, h_schedule, cloud, flow_map_y=None,
                     require_clean=True):
    """Fraction of cloud points in B_R(0) where the first-order expansion of
    f along the Y-flow misses by more than ``eps_level``:

        F_h(z) = |f(Phi_h^Y(z)) - f(z) - h df(z) Y(z)| / |h|.

    Rows are (h, fraction).  With ``require_clean`` the fractions must be
    nonincreasing and end below 1%, as they do for continuously
    differentiable f.
    """
    if f.jac is None:
        raise CapabilityError("f needs a Jacobian for the first-order term")
    fy = _flow_map(Y, cfg, flow_map_y)
    pts = cloud.points
    in_ball = np.linalg.norm(pts, axis=1) <= R
    if not np.any(in_ball):
        raise ParameterError(f"no cloud points inside B_{R}(0)")
    f0 = np.atleast_2d(f.eval(pts))
    df = f.jac(pts)
    Yv = Y.eval(pts)
    lin = np.einsum("nij,nj->ni", df, Yv)
    report = ConvergenceReport(label="h", note=f"fraction with F_h > {eps_level}")
    for h in h_schedule:
        moved = fy(pts, float(h))
        fh = np.linalg.norm(np.atleast_2d(f.eval(moved)) - f0 - h * lin, axis=1) / abs(h)
        frac = float(np.mean(fh[in_ball] > eps_level))
        report.add(h, frac)
    if require_clean:
        if not report.nonincreasing(slack=0.0):
            raise NumericError(f"exceedance fractions increased: {report.rows}")
        if report.values[-1] >= 0.01:
            raise NumericError(
                f"exceedance fraction {report.values[-1]:.3f} at h = {h_schedule[-1]} "
                "did not drop below 1%"
            )
    return report
