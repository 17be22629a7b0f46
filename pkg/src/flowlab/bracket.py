"""Lie brackets and the defects that measure non-commutativity of flows.

The bracket convention throughout is [X, Y] = DY X - DX Y.  Under this
convention the exact affine-shear computation gives

    Phi_t^X(Phi_s^Y(z)) - Phi_s^Y(Phi_t^X(z)) = -ts [X, Y](z) + o(s^2 + t^2),

so the sign constant relating the quadratic expansion of the flow
commutator to the bracket is -1.  The widely quoted expansion carries the
opposite sign; the affine oracle is exact, so the oracle wins and the
constant below is fixed by it.
"""

from dataclasses import dataclass

import numpy as np

from .convergence import ConvergenceReport
from .errors import CapabilityError, NumericError, ParameterError
from .fields import DEFAULT_FD_STEP, fd_jacobian
from .flow import (
    flow_error_budget,
    flow_point,
    flow_points,
    jacobian_density,
    jacobian_density_cloud,
)

# Sign relating the measured commutator defect to ts [X, Y]; fixed by the
# nilpotent-shear oracle (see module docstring), not adjustable.
TAYLOR_SIGN = -1.0

DETECTION_FACTOR = 10.0


@dataclass
class DefectSample:
    """One measured defect at a point, with the parameters that produced it."""

    z: np.ndarray
    value: np.ndarray
    params: dict

    def __post_init__(self):
        if not np.all(np.isfinite(self.value)):
            raise NumericError("defect sample has non-finite entries")


def _jac_at(F, pts, h):
    if F.jac is not None:
        return F.jac(pts)
    return fd_jacobian(F, pts, h)


def lie_bracket(X, Y, z, h=DEFAULT_FD_STEP):
    """[X, Y](z) = DY(z) X(z) - DX(z) Y(z), analytic Jacobians when present."""
    pts = np.atleast_2d(np.asarray(z, dtype=float))
    single = np.asarray(z).ndim == 1
    DX = _jac_at(X, pts, h)
    DY = _jac_at(Y, pts, h)
    out = np.einsum("nij,nj->ni", DY, X.eval(pts)) - np.einsum(
        "nij,nj->ni", DX, Y.eval(pts)
    )
    return out[0] if single else out


def defect_budget(cfg, t, s, cloud, X, Y):
    """A priori integrator budget for a two-leg composition defect."""
    return flow_error_budget(cfg, abs(t) + abs(s), cloud.box.diameter, X, Y)


def commutativity_defect(X, Y, cfg, cloud, t, s, q, flow_map_x=None, flow_map_y=None):
    """Weighted L^q cloud norm of Phi_t^X(Phi_s^Y(z)) - Phi_s^Y(Phi_t^X(z))."""
    if q < 1:
        raise ParameterError(f"norm exponent must be >= 1, got {q}")
    fx = flow_map_x or (lambda pts, tt: flow_points(X, cfg, pts, tt))
    fy = flow_map_y or (lambda pts, ss: flow_points(Y, cfg, pts, ss))
    xy = fx(fy(cloud.points, s), t)
    yx = fy(fx(cloud.points, t), s)
    return cloud.norm(xy - yx, q)


def taylor_remainder(X, Y, cfg, z, t, s):
    """Measured commutator defect at z against its quadratic prediction.

    Returns (defect_vector, predicted_vector) with the prediction
    t s * TAYLOR_SIGN * [X, Y](z); their difference is o(s^2 + t^2).
    """
    z = np.asarray(z, dtype=float)
    xy = flow_point(X, cfg, flow_point(Y, cfg, z, s), t)
    yx = flow_point(Y, cfg, flow_point(X, cfg, z, t), s)
    defect = xy - yx
    predicted = t * s * TAYLOR_SIGN * lie_bracket(X, Y, z)
    return defect, predicted


def is_noncommuting(X, Y, cfg, cloud, probe=1e-2, q=2):
    """Flag a pair as non-commuting when the defect per unit ts exceeds
    DETECTION_FACTOR times the integrator budget at t = s = ``probe``."""
    defect = commutativity_defect(X, Y, cfg, cloud, probe, probe, q)
    budget = defect_budget(cfg, probe, probe, cloud, X, Y)
    return defect / probe ** 2 > DETECTION_FACTOR * budget / probe ** 2, defect, budget


def pushforward_defects(X, Y, cfg, pts, t):
    """J(t) Y(z) - Y(Phi_t^X(z)) for every row of ``pts``, shape (N, dim).

    Zero (for a.e. z) exactly when the flow of X carries Y onto itself.
    """
    if X.jac is None:
        raise CapabilityError("pushforward defect needs the Jacobian of X")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    traj = jacobian_density_cloud(X, cfg, pts, t)
    idx = -1 if t >= 0 else 0
    J = traj.jacobian[idx]
    end = traj.states[idx]
    return np.einsum("nij,nj->ni", J, Y.eval(pts)) - Y.eval(end)


def pushforward_defect(X, Y, cfg, z, t):
    """Single-point pushforward-invariance defect."""
    return pushforward_defects(X, Y, cfg, np.asarray(z, dtype=float)[None, :], t)[0]


def mixed_ode_residual(X, Y, cfg, z, t_max, n_rows=21, fd_step=1e-4):
    """Residual of the transported-field ODE along the X-flow.

    When [X, Y] = 0, the curve A(t) = Y(Phi_t^X(z)) satisfies
    dA/dt = DX(Phi_t^X) A; each row holds (t, |centered dA/dt - DX A|).
    A nonzero bracket shows up as a residual of the bracket's own size.
    """
    if t_max <= 0:
        raise ParameterError(f"t_max must be positive, got {t_max}")
    z = np.asarray(z, dtype=float)
    report = ConvergenceReport(label="t", note="transported-field ODE residual")
    for tj in np.linspace(0.0, t_max, n_rows):
        mid = flow_point(X, cfg, z, tj)
        plus = flow_point(X, cfg, z, tj + fd_step)
        minus = flow_point(X, cfg, z, tj - fd_step)
        dA = (Y(plus) - Y(minus)) / (2.0 * fd_step)
        DX_mid = _jac_at(X, mid[None, :], DEFAULT_FD_STEP)[0]
        residual = dA - DX_mid @ Y(mid)
        report.add(tj, float(np.linalg.norm(residual)))
    return report


def defect_rows_to_csv(rows, path):
    """Write defect rows as CSV (t, s, q, defect, budget, verdict)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,s,q,defect,budget,verdict\n")
        for r in rows:
            verdict = "pass" if r["verdict"] else "fail"
            fh.write(
                f"{r['t']!r},{r['s']!r},{r['q']!r},{r['defect']!r},"
                f"{r['budget']!r},{verdict}\n"
            )
