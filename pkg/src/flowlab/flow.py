"""Flow-map integration and transported densities.

Fixed-step explicit 4th-order one-step integration throughout: the error
model is deterministic, so defect norms are reproducible and can be
budgeted a priori.  Backward time reuses the same scheme with a negated
step, which is arithmetically identical to integrating the negated field.

Rough (sobolev-tagged) fields are normally integrated through their
mollified proxy (``FlowConfig.eps_schedule``); feeding the raw field to
the integrator is reserved for comparisons against closed-form flows,
where the kink-induced error is itself the quantity under study.
"""

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .convergence import ConvergenceReport
from .errors import (
    BoundViolationError,
    CapabilityError,
    EscapeError,
    NumericError,
    ParameterError,
)
from .fields import fd_divergence, mollified_field, mollify, standard_mollifier

BUDGET_CONSTANT = 50.0
MAX_STEPS = 1e8


@dataclass(frozen=True)
class FlowConfig:
    """Integrator parameters.

    ``eps_schedule`` is a strictly decreasing tuple of mollification
    scales; when nonempty, flows integrate the mollified field at the
    smallest scale and stability studies sweep the whole schedule.  Empty
    means the raw field is integrated.
    """

    dt: float = 1e-3
    method: str = "rk4"
    eps_schedule: tuple = ()

    def __post_init__(self):
        if self.dt <= 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.method != "rk4":
            raise ParameterError(f"unsupported method {self.method!r}")
        eps = tuple(float(e) for e in self.eps_schedule)
        object.__setattr__(self, "eps_schedule", eps)
        if eps:
            if any(e <= 0 for e in eps):
                raise ParameterError("eps_schedule entries must be positive")
            if any(b >= a for a, b in zip(eps, eps[1:])):
                raise ParameterError("eps_schedule must be strictly decreasing")


@dataclass
class Trajectory:
    """A sampled flow path with optional density and Jacobian tracks.

    ``times`` is increasing and contains 0; the state at time 0 is the
    initial point and the density there is 1.
    """

    times: np.ndarray
    states: np.ndarray
    density: Optional[np.ndarray] = None
    jacobian: Optional[np.ndarray] = None

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError("trajectory times must be strictly increasing")
        idx0 = int(np.argmin(np.abs(self.times)))
        if abs(self.times[idx0]) > 1e-12:
            raise ParameterError("trajectory times must include 0")
        for track in (self.states, self.density, self.jacobian):
            if track is not None and len(track) != len(self.times):
                raise ParameterError("trajectory tracks must share the time length")
        if self.density is not None and np.any(
            np.abs(np.asarray(self.density)[idx0] - 1.0) > 1e-12
        ):
            raise ParameterError("transported density must equal 1 at time 0")

    def to_csv(self, path):
        """Columns t, z_1..z_dim, xi (optional), J_11..J_dd (optional)."""
        dim = self.states.shape[1]
        header = ["t"] + [f"z_{i + 1}" for i in range(dim)]
        cols = [self.times[:, None], self.states]
        if self.density is not None:
            header.append("xi")
            cols.append(self.density[:, None])
        if self.jacobian is not None:
            header += [f"J_{i + 1}{j + 1}" for i in range(dim) for j in range(dim)]
            cols.append(self.jacobian.reshape(len(self.times), dim * dim))
        data = np.hstack(cols)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


@dataclass
class DensityReport:
    """Observed density range against its Gronwall envelope."""

    t_max: float
    xi_min: float
    xi_max: float
    bound: float
    lipschitz_estimate: float


def resolve_field(F, cfg):
    """The field the integrator actually sees: raw, or mollified at the smallest scale."""
    if not cfg.eps_schedule:
        return F
    kernel = standard_mollifier(cfg.eps_schedule[-1], F.dim)
    return mollified_field(F, kernel)


def _step_count(t, dt):
    if t == 0.0:
        return 0
    n = abs(t) / dt
    if n > MAX_STEPS:
        raise ParameterError(f"|t|/dt = {n:.3g} exceeds the step limit {MAX_STEPS:.0e}")
    return max(1, int(math.ceil(n - 1e-9)))


def _integrate(F, cfg, pts, t):
    """RK4 on every row of ``pts`` for time t (signed); hard escape errors."""
    n_steps = _step_count(t, cfg.dt)
    if n_steps == 0:
        return pts.copy()
    h = t / n_steps
    z = pts.copy()
    box = F.box
    for k in range(n_steps):
        k1 = F.eval(z)
        k2 = F.eval(z + 0.5 * h * k1)
        k3 = F.eval(z + 0.5 * h * k2)
        k4 = F.eval(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        inside = box.contains(z)
        if not np.all(inside):
            idx = int(np.argmin(inside))
            raise EscapeError(
                f"trajectory left the declared box at t = {(k + 1) * h:.6g}",
                exit_time=(k + 1) * h,
                index=idx,
            )
    return z


def flow_point(F, cfg, z, t):
    """Flow a single point for time t (negative t integrates backward)."""
    z = np.asarray(z, dtype=float)
    G = resolve_field(F, cfg)
    return _integrate(G, cfg, z[None, :], float(t))[0]


def flow_points(F, cfg, pts, t):
    """Flow an (N, dim) array of points for time t."""
    G = resolve_field(F, cfg)
    return _integrate(G, cfg, np.atleast_2d(np.asarray(pts, dtype=float)), float(t))


def flow_cloud(F, cfg, cloud, t):
    """Flow every cloud point, preserving quadrature weights."""
    moved = flow_points(F, cfg, cloud.points, t)
    return dataclasses.replace(cloud, points=moved)


def group_defect(F, cfg, cloud, t, s, q):
    """Weighted L^q norm over the cloud of Phi_t(Phi_s(z)) - Phi_(t+s)(z)."""
    if q < 1:
        raise ParameterError(f"norm exponent must be >= 1, got {q}")
    via = flow_points(F, cfg, flow_points(F, cfg, cloud.points, s), t)
    direct = flow_points(F, cfg, cloud.points, t + s)
    return cloud.norm(via - direct, q)


def jacobian_density_cloud(F, cfg, pts, t_max):
    """Batched version of ``jacobian_density``: states (T, N, dim), density
    (T, N), jacobian (T, N, dim, dim) for an (N, dim) array of seeds."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if not math.isfinite(t_max):
        raise ParameterError("t_max must be finite")
    G = resolve_field(F, cfg)
    if G.div is not None:
        divfun = G.div
    else:
        divfun = lambda p: fd_divergence(G, p)
    jacfun = G.jac
    track_jac = jacfun is not None

    n_steps = _step_count(t_max, cfg.dt)
    h = t_max / n_steps if n_steps else 0.0
    n, dim = pts.shape

    zt = pts.copy()
    xi = np.ones(n)
    J = np.broadcast_to(np.eye(dim), (n, dim, dim)).copy()

    times = [0.0]
    states = [zt.copy()]
    dens = [xi.copy()]
    jacs = [J.copy()] if track_jac else None

    def rhs(state, xi_v, J_v):
        vel = G.eval(state)
        dxi = divfun(state) * xi_v
        dJ = np.einsum("nij,njk->nik", jacfun(state), J_v) if track_jac else None
        return vel, dxi, dJ

    for k in range(n_steps):
        v1, x1, j1 = rhs(zt, xi, J)
        v2, x2, j2 = rhs(zt + 0.5 * h * v1, xi + 0.5 * h * x1,
                         J + 0.5 * h * j1 if track_jac else J)
        v3, x3, j3 = rhs(zt + 0.5 * h * v2, xi + 0.5 * h * x2,
                         J + 0.5 * h * j2 if track_jac else J)
        v4, x4, j4 = rhs(zt + h * v3, xi + h * x3,
                         J + h * j3 if track_jac else J)
        zt = zt + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        xi = xi + (h / 6.0) * (x1 + 2.0 * x2 + 2.0 * x3 + x4)
        if track_jac:
            J = J + (h / 6.0) * (j1 + 2.0 * j2 + 2.0 * j3 + j4)
        inside = G.box.contains(zt)
        if not np.all(inside):
            raise EscapeError(
                f"trajectory left the declared box at t = {(k + 1) * h:.6g}",
                exit_time=(k + 1) * h,
                index=int(np.argmin(inside)),
            )
        times.append((k + 1) * h)
        states.append(zt.copy())
        dens.append(xi.copy())
        if track_jac:
            jacs.append(J.copy())

    order = np.argsort(times) if t_max < 0 else slice(None)
    times = np.asarray(times)[order]
    states = np.asarray(states)[order]
    dens = np.asarray(dens)[order]
    jac_arr = np.asarray(jacs)[order] if track_jac else None
    return Trajectory(times=times, states=states, density=dens, jacobian=jac_arr)


def jacobian_density(F, cfg, z, t_max):
    """Trajectory of z with the transported density xi and, when the field
    has an analytic Jacobian, the flow differential J.

    The density solves d/dt xi = div(F)(Phi_t) xi with xi(0) = 1, coupled
    to the state; J solves d/dt J = DF(Phi_t) J from the identity.  For
    negative ``t_max`` the same scheme runs backward and the trajectory is
    returned in increasing time order (0 last).
    """
    z = np.asarray(z, dtype=float)
    batched = jacobian_density_cloud(F, cfg, z[None, :], t_max)
    return Trajectory(
        times=batched.times,
        states=batched.states[:, 0, :],
        density=batched.density[:, 0],
        jacobian=None if batched.jacobian is None else batched.jacobian[:, 0],
    )


def density_bounds_check(traj, div_sup, T, tol=1e-6):
    """Check the Gronwall envelope and the time-Lipschitz bound of xi.

    e^(-T div_sup) (1 - tol) <= xi(t) <= e^(T div_sup) (1 + tol) must hold
    for all samples with |t| <= T, and the discrete Lipschitz constant of
    xi must stay below div_sup e^(T div_sup) (1 + tol).  Violations raise
    BoundViolationError carrying the worst sample.
    """
    if traj.density is None:
        raise CapabilityError("trajectory has no density track")
    mask = np.abs(traj.times) <= T * (1.0 + 1e-12)
    times = traj.times[mask]
    xi = traj.density[mask]
    if xi.size == 0:
        raise ParameterError("no trajectory samples inside |t| <= T")
    bound = math.exp(T * div_sup)
    lower = (1.0 / bound) * (1.0 - tol)
    upper = bound * (1.0 + tol)
    xi_min = float(np.min(xi))
    xi_max = float(np.max(xi))
    if xi_min < lower or xi_max > upper:
        flat_idx = int(np.argmax(np.maximum(lower - xi, xi - upper).reshape(len(times), -1).max(axis=1)))
        bad = xi.reshape(len(times), -1)[flat_idx]
        worst = (float(times[flat_idx]), float(bad[np.argmax(np.abs(np.log(np.abs(bad) + 1e-300)))]), bound)
        raise BoundViolationError(
            f"density left [{lower:.6g}, {upper:.6g}] at t = {worst[0]:.6g} "
            f"with xi = {worst[1]:.6g}",
            worst=worst,
        )
    if len(times) > 1:
        steps = np.abs(np.diff(times))
        dxi = np.abs(np.diff(xi, axis=0)).reshape(len(times) - 1, -1)
        lip = float(np.max(dxi / steps[:, None]))
    else:
        lip = 0.0
    lip_bound = div_sup * bound * (1.0 + tol)
    if lip > lip_bound:
        raise BoundViolationError(
            f"density time-Lipschitz constant {lip:.6g} exceeds {lip_bound:.6g}",
            worst=(lip, lip_bound),
        )
    return DensityReport(
        t_max=T, xi_min=xi_min, xi_max=xi_max, bound=bound, lipschitz_estimate=lip
    )


def stability_study(F_rough, cfg, cloud, t, slack=0.1, floor=1e-12):
    """Cloud flows of the mollified grid field across the eps schedule.

    Rows pair each scale with the weighted L^1 distance between the flow
    at that scale and the flow at the smallest scale; the sequence must be
    nonincreasing up to ``slack``, ignoring rows below the roundoff
    ``floor`` (smoothing is exact on locally linear fields, leaving pure
    noise).  No rate is asserted.
    """
    if not cfg.eps_schedule:
        raise ParameterError("stability_study needs a nonempty eps_schedule")
    flows = {}
    for eps in cfg.eps_schedule:
        kernel = standard_mollifier(eps, F_rough.dim)
        smooth = mollify(F_rough, kernel).to_field()
        flows[eps] = _integrate(
            smooth, cfg, np.atleast_2d(np.asarray(cloud.points, dtype=float)), float(t)
        )
    finest = flows[cfg.eps_schedule[-1]]
    report = ConvergenceReport(label="eps", note="L1 cloud distance to finest scale")
    for eps in cfg.eps_schedule:
        report.add(eps, cloud.norm(flows[eps] - finest, 1))
    v = report.values
    ok = np.all((v[1:] <= v[:-1] * (1.0 + slack)) | (v[1:] <= floor))
    if not ok:
        raise NumericError(
            f"stability distances are not monotone within {slack:.0%}: "
            f"{report.rows}"
        )
    return report


# ---------------------------------------------------------------------------
# error budgets

def integrator_order_term(dt, *fields):
    """dt^4 for smooth/lipschitz fields; dt^(1+alpha) when a sobolev field
    with a derivative kink of exponent alpha is integrated raw."""
    alphas = [
        f.holder_exponent
        for f in fields
        if f is not None and f.regularity == "sobolev" and f.holder_exponent is not None
    ]
    if alphas:
        return dt ** (1.0 + min(alphas))
    return dt ** 4


def flow_error_budget(cfg, total_time, scale, *fields):
    """A priori bound 50 * order(dt) * total flow time * geometric scale."""
    return BUDGET_CONSTANT * integrator_order_term(cfg.dt, *fields) * abs(total_time) * scale
