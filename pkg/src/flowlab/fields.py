"""Vector fields, mollification kernels, grids, and the preset catalogue.

All field callables are vectorized over points: they accept an (N, dim)
array and return (N, ...).  The ``VecField`` wrapper adds single-point
dispatch and carries the metadata (declared box, sup bounds, regularity)
that the flow and defect machinery relies on.

Linear and Hamiltonian presets are multiplied by a smooth radial cutoff
that is identically 1 inside ``r_cut`` so every experiment samples the
region where the closed-form formulas are exact, while the field stays
globally bounded.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.signal import fftconvolve

from .errors import (
    BoundaryMarginError,
    ParameterError,
    ResolutionError,
    UnknownPresetError,
)

DEFAULT_FD_STEP = 1e-4

REGULARITY_TAGS = ("smooth", "lipschitz", "sobolev")


# ---------------------------------------------------------------------------
# geometry

class Box:
    """Axis-aligned box [lo_1, hi_1] x ... x [lo_d, hi_d]."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ParameterError(f"invalid box: lo={lo}, hi={hi}")

    @property
    def dim(self):
        return self.lo.size

    @property
    def extents(self):
        return self.hi - self.lo

    @property
    def volume(self):
        return float(np.prod(self.extents))

    @property
    def diameter(self):
        return float(np.linalg.norm(self.extents))

    def contains(self, points, margin=0.0):
        """Boolean mask of points at distance >= margin from the boundary."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.all((pts >= self.lo + margin) & (pts <= self.hi - margin), axis=1)
        return ok

    def shrink(self, margin):
        return Box(self.lo + margin, self.hi - margin)

    def random_points(self, n, rng, margin=0.0):
        lo = self.lo + margin
        hi = self.hi - margin
        return lo + (hi - lo) * rng.random((n, self.dim))

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


def _as_points(z):
    """Normalize z to an (N, dim) array, remembering if it was a single point."""
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


# ---------------------------------------------------------------------------
# vector fields

@dataclass(frozen=True)
class VecField:
    """A dimension-``dim`` vector field with optional analytic calculus.

    ``eval`` maps (N, dim) -> (N, dim); ``jac``, when present, maps
    (N, dim) -> (N, dim, dim) with row i holding the gradient of component
    i; ``div`` maps (N, dim) -> (N,).  ``sup_norm`` bounds |eval| and
    ``div_sup`` bounds |div| on the declared ``box``.  ``holder_exponent``
    is set for sobolev-tagged fields whose first derivative blows up like
    |x|^(alpha-1) across a singular set; budget formulas use it.
    """

    dim: int
    eval: Callable
    box: Box
    sup_norm: float
    div_sup: float
    jac: Optional[Callable] = None
    div: Optional[Callable] = None
    regularity: str = "smooth"
    holder_exponent: Optional[float] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError(f"dim must be >= 1, got {self.dim}")
        if self.sup_norm < 0 or self.div_sup < 0:
            raise ParameterError("sup_norm and div_sup must be nonnegative")
        if self.regularity not in REGULARITY_TAGS:
            raise ParameterError(f"unknown regularity tag {self.regularity!r}")

    def __call__(self, z):
        pts, single = _as_points(z)
        out = self.eval(pts)
        return out[0] if single else out

    def jacobian(self, z, h=DEFAULT_FD_STEP):
        """Analytic Jacobian when available, else central differences."""
        if self.jac is not None:
            pts, single = _as_points(z)
            out = self.jac(pts)
            return out[0] if single else out
        return fd_jacobian(self, z, h)

    def divergence(self, z, h=DEFAULT_FD_STEP):
        """Analytic divergence when available, else central differences."""
        if self.div is not None:
            pts, single = _as_points(z)
            out = self.div(pts)
            return out[0] if single else out
        return fd_divergence(self, z, h)


def fd_jacobian(F, z, h=DEFAULT_FD_STEP):
    """Central-difference Jacobian: entry (i, j) = (F_i(z+h e_j) - F_i(z-h e_j)) / 2h.

    Points must sit inside the field's box with margin >= h, otherwise the
    stencil would sample outside the declared domain.
    """
    if h <= 0:
        raise ParameterError(f"fd step must be positive, got {h}")
    pts, single = _as_points(z)
    if not np.all(F.box.contains(pts, margin=h)):
        raise BoundaryMarginError(
            f"fd stencil with h={h} leaves the declared box for some points"
        )
    n, d = pts.shape
    J = np.empty((n, d, d))
    for j in range(d):
        zp = pts.copy()
        zm = pts.copy()
        zp[:, j] += h
        zm[:, j] -= h
        J[:, :, j] = (F.eval(zp) - F.eval(zm)) / (2.0 * h)
    return J[0] if single else J


def fd_divergence(F, z, h=DEFAULT_FD_STEP):
    """Trace of the central-difference Jacobian (same stencil, same errors)."""
    if h <= 0:
        raise ParameterError(f"fd step must be positive, got {h}")
    pts, single = _as_points(z)
    if not np.all(F.box.contains(pts, margin=h)):
        raise BoundaryMarginError(
            f"fd stencil with h={h} leaves the declared box for some points"
        )
    n, d = pts.shape
    out = np.zeros(n)
    for j in range(d):
        zp = pts.copy()
        zm = pts.copy()
        zp[:, j] += h
        zm[:, j] -= h
        out += (F.eval(zp)[:, j] - F.eval(zm)[:, j]) / (2.0 * h)
    return out[0] if single else out


def fd_consistency(F, z, h=DEFAULT_FD_STEP):
    """Max disagreement between Jacobians at steps h and h/2 (Richardson check)."""
    J1 = fd_jacobian(F, z, h)
    J2 = fd_jacobian(F, z, h / 2.0)
    return float(np.max(np.abs(J1 - J2)))


# ---------------------------------------------------------------------------
# mollification kernel

def bump_profile(u):
    """The standard bump exp(-1/(1-u^2)) on u < 1, zero beyond."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


def bump_profile_deriv_over_u(u):
    """eta'(u)/u = -2 eta(u) / (1-u^2)^2, smooth through u = 0."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    one = 1.0 - ui * ui
    out[inside] = -2.0 * np.exp(-1.0 / one) / (one * one)
    return out


def _sphere_surface(dim):
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


@dataclass(frozen=True)
class MollifierKernel:
    """Radial smooth kernel supported in the closed unit ball, scaled to ``epsilon``.

    ``normalization`` makes the unscaled kernel integrate to 1 over R^dim;
    it is computed by radial quadrature at construction.  The scaled kernel
    is rho_eps(x) = eps^-dim * normalization * profile(|x|/eps).
    """

    epsilon: float
    dim: int
    normalization: float
    profile: Callable = dc_field(default=bump_profile, repr=False)
    profile_deriv_over_u: Callable = dc_field(
        default=bump_profile_deriv_over_u, repr=False
    )

    def density(self, x):
        """rho_eps at points x of shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return (
            self.normalization
            * self.profile(r / self.epsilon)
            / self.epsilon ** self.dim
        )

    def density_grad(self, x):
        """Analytic gradient of rho_eps, shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        fac = (
            self.normalization
            * self.profile_deriv_over_u(r / self.epsilon)
            / self.epsilon ** (self.dim + 2)
        )
        return fac[..., None] * x

    def _offsets(self, spacing):
        m = int(math.floor(self.epsilon / spacing + 1e-12))
        axis = np.arange(-m, m + 1) * spacing
        grids = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1), (2 * m + 1,)

    def stencil(self, spacing):
        """Symmetric quadrature stencil (offsets, weights), weights sum to 1.

        Discretizes the mollification integral on a grid of the given
        spacing; the renormalized weights make constants exact and keep the
        sup bound of anything convolved against them.
        """
        if self.epsilon < 2.0 * spacing:
            raise ResolutionError(
                f"kernel scale {self.epsilon} under-resolved by spacing {spacing}"
            )
        offsets, _ = self._offsets(spacing)
        w = self.density(offsets)
        keep = w > 0.0
        offsets, w = offsets[keep], w[keep]
        return offsets, w / w.sum()

    def grid_kernel(self, spacing, normalized=True):
        """Kernel sampled on a grid, shaped (2m+1,)*dim, for discrete convolution."""
        if self.epsilon < 2.0 * spacing:
            raise ResolutionError(
                f"kernel scale {self.epsilon} under-resolved by spacing {spacing}"
            )
        offsets, side = self._offsets(spacing)
        w = self.density(offsets) * spacing ** self.dim
        w = w.reshape(side * self.dim)
        if normalized:
            w = w / w.sum()
        return w

    def grid_kernel_partial(self, spacing, j):
        """Partial derivative kernel d_j rho_eps on the grid, not normalized."""
        if self.epsilon < 2.0 * spacing:
            raise ResolutionError(
                f"kernel scale {self.epsilon} under-resolved by spacing {spacing}"
            )
        offsets, side = self._offsets(spacing)
        w = self.density_grad(offsets)[:, j] * spacing ** self.dim
        return w.reshape(side * self.dim)


def standard_mollifier(epsilon, dim=2):
    """Unit-mass bump kernel at scale ``epsilon`` in dimension ``dim``."""
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    radial, _ = quad(lambda u: u ** (dim - 1) * float(bump_profile(u)), 0.0, 1.0)
    normalization = 1.0 / (_sphere_surface(dim) * radial)
    return MollifierKernel(epsilon=float(epsilon), dim=dim, normalization=normalization)


# ---------------------------------------------------------------------------
# grid fields and discrete mollification

@dataclass
class GridField:
    """Vector samples on a uniform inclusive grid over ``box``.

    ``samples`` has shape (n_1+1, ..., n_d+1, dim) with n_i = extent_i / spacing.
    """

    box: Box
    spacing: float
    samples: np.ndarray

    def __post_init__(self):
        if self.spacing <= 0:
            raise ParameterError(f"spacing must be positive, got {self.spacing}")
        counts = self.box.extents / self.spacing
        rounded = np.rint(counts)
        if np.any(np.abs(counts - rounded) > 1e-9):
            raise ParameterError("box extents must be integer multiples of spacing")
        expected = tuple(int(r) + 1 for r in rounded) + (self.box.dim,)
        if self.samples.shape != expected:
            raise ParameterError(
                f"samples shape {self.samples.shape} != expected {expected}"
            )

    @property
    def dim(self):
        return self.box.dim

    def axis_nodes(self, i):
        n = self.samples.shape[i]
        return self.box.lo[i] + np.arange(n) * self.spacing

    def nodes(self):
        """All grid nodes as an (N, dim) array in row-major order."""
        axes = [self.axis_nodes(i) for i in range(self.dim)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def interior_mask(self, margin):
        """Row-major mask of nodes at distance > margin from the box boundary."""
        return self.box.contains(self.nodes(), margin=margin * (1.0 + 1e-12))

    def sup_norm(self):
        return float(np.max(np.linalg.norm(self.samples, axis=-1)))

    @classmethod
    def from_function(cls, fn, box, spacing):
        counts = np.rint(box.extents / spacing).astype(int)
        axes = [box.lo[i] + np.arange(counts[i] + 1) * spacing for i in range(box.dim)]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        vals = fn(pts)
        return cls(box=box, spacing=spacing, samples=vals.reshape(*[c + 1 for c in counts], -1))

    def to_field(self, sup_norm=None, div_sup=0.0, regularity="lipschitz"):
        """Multilinear interpolant wrapped as a VecField on the same box."""
        interp = _make_interpolant(self)
        return VecField(
            dim=self.dim,
            eval=interp,
            box=self.box,
            sup_norm=self.sup_norm() if sup_norm is None else sup_norm,
            div_sup=div_sup,
            regularity=regularity,
        )

    def save_csv(self, path):
        """Header (dim, box, spacing) then row-major node vectors."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"dim,{self.dim}\n")
            fh.write("lo," + ",".join(repr(float(v)) for v in self.box.lo) + "\n")
            fh.write("hi," + ",".join(repr(float(v)) for v in self.box.hi) + "\n")
            fh.write(f"spacing,{float(self.spacing)!r}\n")
            flat = self.samples.reshape(-1, self.dim)
            for row in flat:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load_csv(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        dim = int(lines[0].split(",")[1])
        lo = [float(v) for v in lines[1].split(",")[1:]]
        hi = [float(v) for v in lines[2].split(",")[1:]]
        spacing = float(lines[3].split(",")[1])
        flat = np.asarray(
            [[float(v) for v in ln.split(",")] for ln in lines[4:]], dtype=float
        )
        box = Box(lo, hi)
        counts = np.rint(box.extents / spacing).astype(int)
        samples = flat.reshape(*[c + 1 for c in counts], dim)
        return cls(box=box, spacing=spacing, samples=samples)


def _make_interpolant(gf):
    """Vectorized multilinear interpolation on the grid (clamped to the box)."""
    lo = gf.box.lo
    spacing = gf.spacing
    shape = gf.samples.shape[:-1]
    samples = gf.samples
    dim = gf.dim

    def interp(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rel = (pts - lo) / spacing
        i0 = np.floor(rel).astype(int)
        for ax in range(dim):
            np.clip(i0[:, ax], 0, shape[ax] - 2, out=i0[:, ax])
        frac = rel - i0
        np.clip(frac, 0.0, 1.0, out=frac)
        out = np.zeros((pts.shape[0], samples.shape[-1]))
        for corner in range(2 ** dim):
            idx = []
            w = np.ones(pts.shape[0])
            for ax in range(dim):
                bit = (corner >> ax) & 1
                idx.append(i0[:, ax] + bit)
                w = w * (frac[:, ax] if bit else (1.0 - frac[:, ax]))
            out += w[:, None] * samples[tuple(idx)]
        return out

    return interp


def mollify(gf, kernel):
    """Discrete convolution of a GridField with the scaled kernel.

    Zero-padded outside the box; the discrete kernel weights are
    renormalized to unit sum so constants are reproduced exactly at
    interior nodes and the sup norm never grows.
    """
    if kernel.epsilon < 2.0 * gf.spacing:
        raise ResolutionError(
            f"kernel scale {kernel.epsilon} needs spacing <= {kernel.epsilon / 2}, "
            f"grid has {gf.spacing}"
        )
    w = kernel.grid_kernel(gf.spacing, normalized=True)
    out = np.empty_like(gf.samples)
    for i in range(gf.samples.shape[-1]):
        out[..., i] = fftconvolve(gf.samples[..., i], w, mode="same")
    return GridField(box=gf.box, spacing=gf.spacing, samples=out)


def mollified_field(F, kernel, spacing=None):
    """Smooth proxy of a function-backed field: convex combination of translates.

    Discretizes b * rho_eps with a symmetric stencil whose weights sum to 1,
    so constants and linear fields are reproduced exactly away from the
    cutoff region, |b_eps| <= |b|_sup, and divergence/Jacobian commute with
    the smoothing by construction.  The returned field's box shrinks by
    epsilon so every stencil point stays inside the original domain.
    """
    if spacing is None:
        spacing = kernel.epsilon / 4.0
    offsets, weights = kernel.stencil(spacing)

    def smeared(fn):
        def call(pts):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            acc = weights[0] * fn(pts - offsets[0])
            for k in range(1, len(weights)):
                acc = acc + weights[k] * fn(pts - offsets[k])
            return acc

        return call

    return VecField(
        dim=F.dim,
        eval=smeared(F.eval),
        jac=None if F.jac is None else smeared(F.jac),
        div=None if F.div is None else smeared(F.div),
        box=F.box.shrink(kernel.epsilon),
        sup_norm=F.sup_norm,
        div_sup=F.div_sup,
        regularity="smooth",
        holder_exponent=None,
    )


# ---------------------------------------------------------------------------
# smooth radial cutoff

def _smooth_step_raw(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1, monotone in between."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    out[s >= 1.0] = 1.0
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    a = np.exp(-1.0 / sm)
    b = np.exp(-1.0 / (1.0 - sm))
    out[mid] = a / (a + b)
    return out


def _smooth_step_deriv(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    a = np.exp(-1.0 / sm)
    b = np.exp(-1.0 / (1.0 - sm))
    da = a / sm ** 2
    db = -b / (1.0 - sm) ** 2
    out[mid] = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return out


def radial_cutoff(r_cut):
    """Return (chi, chi_prime): 1 on r <= r_cut, 0 on r >= 2 r_cut, smooth."""
    if r_cut <= 0:
        raise ParameterError(f"r_cut must be positive, got {r_cut}")

    def chi(r):
        return 1.0 - _smooth_step_raw((np.asarray(r, dtype=float) - r_cut) / r_cut)

    def chi_prime(r):
        return -_smooth_step_deriv((np.asarray(r, dtype=float) - r_cut) / r_cut) / r_cut

    return chi, chi_prime


# ---------------------------------------------------------------------------
# preset catalogue

PRESET_NAMES = (
    "constants",
    "linear_commuting",
    "nilpotent_shears",
    "rotation_dilation_cutoff",
    "hamiltonian_pair",
    "nonlipschitz_shear_pair",
)

_DEFAULT_BOX_HALF = 4.0
_DEFAULT_R_CUT = 10.0

_J_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class PresetPair:
    """Both fields of a preset plus its oracle metadata.

    ``bracket``, ``flow_x`` and ``flow_y`` are closed forms valid inside the
    declared box (the cutoff region starts well outside it); ``None`` means
    no closed form is available.  ``div_sup_x`` / ``div_sup_y`` are the
    in-box divergence bounds used by density checks.
    """

    name: str
    X: VecField
    Y: VecField
    commuting: bool
    bracket: Optional[Callable]
    flow_x: Optional[Callable]
    flow_y: Optional[Callable]
    div_sup_x: float
    div_sup_y: float
    params: dict


def _constant_field(vec, box):
    vec = np.asarray(vec, dtype=float)
    d = vec.size

    def ev(pts):
        return np.broadcast_to(vec, (pts.shape[0], d)).copy()

    def jc(pts):
        return np.zeros((pts.shape[0], d, d))

    def dv(pts):
        return np.zeros(pts.shape[0])

    return VecField(
        dim=d,
        eval=ev,
        jac=jc,
        div=dv,
        box=box,
        sup_norm=float(np.linalg.norm(vec)),
        div_sup=0.0,
        regularity="smooth",
    )


def _cutoff_linear_field(A, r_cut, box):
    """chi(|z|) A z with analytic Jacobian and divergence everywhere."""
    A = np.asarray(A, dtype=float)
    chi, chi_prime = radial_cutoff(r_cut)
    tr = float(np.trace(A))
    # in-box the cutoff is identically 1, so the corner radius bounds |Az|
    corner = float(np.linalg.norm(np.maximum(np.abs(box.lo), np.abs(box.hi))))
    opnorm = float(np.linalg.norm(A, 2))

    def ev(pts):
        az = pts @ A.T
        return chi(np.linalg.norm(pts, axis=1))[:, None] * az

    def jc(pts):
        r = np.linalg.norm(pts, axis=1)
        az = pts @ A.T
        c = chi(r)
        cp = chi_prime(r)
        rhat = pts / np.maximum(r, 1e-300)[:, None]
        return c[:, None, None] * A + (cp[:, None] * az)[:, :, None] * rhat[:, None, :]

    def dv(pts):
        r = np.linalg.norm(pts, axis=1)
        az = pts @ A.T
        rhat = pts / np.maximum(r, 1e-300)[:, None]
        return chi(r) * tr + chi_prime(r) * np.sum(az * rhat, axis=1)

    return VecField(
        dim=A.shape[0],
        eval=ev,
        jac=jc,
        div=dv,
        box=box,
        sup_norm=opnorm * corner,
        div_sup=abs(tr),
        regularity="smooth",
    )


def _hamiltonian_speed_field(r_cut, box):
    """Y = chi(|z|) H(z) Jz with H = |z|^2/2; divergence-free everywhere."""
    chi, chi_prime = radial_cutoff(r_cut)
    corner = float(np.linalg.norm(np.maximum(np.abs(box.lo), np.abs(box.hi))))

    def ev(pts):
        H = 0.5 * np.sum(pts * pts, axis=1)
        jz = pts @ _J_ROT.T
        return (chi(np.linalg.norm(pts, axis=1)) * H)[:, None] * jz

    def jc(pts):
        r = np.linalg.norm(pts, axis=1)
        H = 0.5 * r * r
        jz = pts @ _J_ROT.T
        c = chi(r)
        cp = chi_prime(r)
        rhat = pts / np.maximum(r, 1e-300)[:, None]
        # D(H Jz) = (Jz) x z + H J, then the cutoff product rule
        dw = jz[:, :, None] * pts[:, None, :] + H[:, None, None] * _J_ROT
        w = H[:, None] * jz
        return c[:, None, None] * dw + (cp[:, None] * w)[:, :, None] * rhat[:, None, :]

    def dv(pts):
        return np.zeros(pts.shape[0])

    sup = 0.5 * corner ** 3
    return VecField(
        dim=2, eval=ev, jac=jc, div=dv, box=box,
        sup_norm=sup, div_sup=0.0, regularity="smooth",
    )


def _signed_power(x, a):
    return np.sign(x) * np.abs(x) ** a


def _nonlipschitz_pair(alpha, r_cut, box):
    """Shear X = (1, |x|^alpha) and its speed-modulated partner Y.

    Both fields are divergence-free, X never vanishes, and w = G(x) - y
    (with G the antiderivative of the shear profile) is a first integral
    of both, which makes the pair commute with closed-form flows:
    the Y-flow is the X-flow run for the rescaled time s * lam(w).
    """
    chi1, chi1_prime = radial_cutoff(r_cut)

    def g_pure(x):
        return np.abs(x) ** alpha

    def g_cut(x):
        return chi1(np.abs(x)) * g_pure(x)

    def g_cut_prime(x):
        # a.e. derivative; returns 0 on the singular line x = 0
        ax = np.abs(x)
        safe = np.where(ax > 0.0, ax, 1.0)
        core = alpha * safe ** (alpha - 1.0) * np.sign(x)
        out = chi1(ax) * core + chi1_prime(ax) * np.sign(x) * g_pure(x)
        return np.where(ax > 0.0, out, 0.0)

    def G(x):
        return _signed_power(x, 1.0 + alpha) / (1.0 + alpha)

    def lam(w):
        return 1.0 / (1.0 + w * w)

    def lam_prime(w):
        return -2.0 * w / (1.0 + w * w) ** 2

    def w_of(pts):
        return G(pts[:, 0]) - pts[:, 1]

    def ev_x(pts):
        out = np.empty_like(pts)
        out[:, 0] = 1.0
        out[:, 1] = g_cut(pts[:, 0])
        return out

    def jc_x(pts):
        n = pts.shape[0]
        J = np.zeros((n, 2, 2))
        J[:, 1, 0] = g_cut_prime(pts[:, 0])
        return J

    def dv_x(pts):
        return np.zeros(pts.shape[0])

    def ev_y(pts):
        return lam(w_of(pts))[:, None] * ev_x(pts)

    def jc_y(pts):
        x = pts[:, 0]
        lw = lam(w_of(pts))
        lpw = lam_prime(w_of(pts))
        gx = g_pure(x)
        Xv = ev_x(pts)
        grad_w = np.stack([gx, -np.ones_like(gx)], axis=1)
        J = Xv[:, :, None] * (lpw[:, None] * grad_w)[:, None, :]
        J += lw[:, None, None] * jc_x(pts)
        return J

    def dv_y(pts):
        # lam'(w) (g - g_cut) vanishes identically inside the cutoff radius
        x = pts[:, 0]
        return lam_prime(w_of(pts)) * (g_pure(x) - g_cut(x))

    hi_x = float(np.max(np.abs([box.lo[0], box.hi[0]])))
    sup_x = math.sqrt(1.0 + hi_x ** (2.0 * alpha))
    X = VecField(
        dim=2, eval=ev_x, jac=jc_x, div=dv_x, box=box,
        sup_norm=sup_x, div_sup=0.0,
        regularity="sobolev", holder_exponent=alpha,
    )
    Y = VecField(
        dim=2, eval=ev_y, jac=jc_y, div=dv_y, box=box,
        sup_norm=sup_x, div_sup=0.0,
        regularity="sobolev", holder_exponent=alpha,
    )

    def flow_x(pts, t):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty_like(pts)
        out[:, 0] = pts[:, 0] + t
        out[:, 1] = pts[:, 1] + G(pts[:, 0] + t) - G(pts[:, 0])
        return out

    def flow_y(pts, s):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        tau = s * lam(w_of(pts))
        out = np.empty_like(pts)
        out[:, 0] = pts[:, 0] + tau
        out[:, 1] = pts[:, 1] + G(pts[:, 0] + tau) - G(pts[:, 0])
        return out

    return X, Y, flow_x, flow_y


def _rotation_matrix(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _zero_bracket(pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return np.zeros_like(pts)


def preset_pair(name, params=None):
    """Build a preset pair by name; returns (X, Y, PresetPair metadata).

    Unknown names raise UnknownPresetError; out-of-range parameters raise
    ParameterError.
    """
    params = dict(params or {})
    if name not in PRESET_NAMES:
        raise UnknownPresetError(
            f"unknown preset {name!r}; choose from {PRESET_NAMES}"
        )
    half = float(params.pop("box_half", _DEFAULT_BOX_HALF))
    if half <= 0:
        raise ParameterError(f"box_half must be positive, got {half}")
    box = Box([-half, -half], [half, half])
    r_cut = float(params.pop("r_cut", _DEFAULT_R_CUT))
    if r_cut <= 0:
        raise ParameterError(f"r_cut must be positive, got {r_cut}")

    if name == "constants":
        _reject_extra(name, params)
        X = _constant_field([1.0, 0.0], box)
        Y = _constant_field([0.0, 1.0], box)
        meta = PresetPair(
            name=name, X=X, Y=Y, commuting=True, bracket=_zero_bracket,
            flow_x=lambda pts, t: np.atleast_2d(pts) + t * np.array([1.0, 0.0]),
            flow_y=lambda pts, s: np.atleast_2d(pts) + s * np.array([0.0, 1.0]),
            div_sup_x=0.0, div_sup_y=0.0, params={"r_cut": r_cut},
        )
        return X, Y, meta

    if name == "linear_commuting":
        scale = float(params.pop("scale", 0.5))
        _reject_extra(name, params)
        A = _J_ROT
        B = scale * np.eye(2)
        X = _cutoff_linear_field(A, r_cut, box)
        Y = _cutoff_linear_field(B, r_cut, box)
        meta = PresetPair(
            name=name, X=X, Y=Y, commuting=True, bracket=_zero_bracket,
            flow_x=lambda pts, t: np.atleast_2d(pts) @ _rotation_matrix(t).T,
            flow_y=lambda pts, s: math.exp(scale * s) * np.atleast_2d(pts),
            div_sup_x=0.0, div_sup_y=abs(2.0 * scale),
            params={"r_cut": r_cut, "scale": scale},
        )
        return X, Y, meta

    if name == "nilpotent_shears":
        _reject_extra(name, params)
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        B = np.array([[0.0, 0.0], [1.0, 0.0]])
        X = _cutoff_linear_field(A, r_cut, box)
        Y = _cutoff_linear_field(B, r_cut, box)
        BA_minus_AB = B @ A - A @ B

        def bracket(pts):
            return np.atleast_2d(np.asarray(pts, dtype=float)) @ BA_minus_AB.T

        meta = PresetPair(
            name=name, X=X, Y=Y, commuting=False, bracket=bracket,
            flow_x=lambda pts, t: np.atleast_2d(pts) + t * (np.atleast_2d(pts) @ A.T),
            flow_y=lambda pts, s: np.atleast_2d(pts) + s * (np.atleast_2d(pts) @ B.T),
            div_sup_x=0.0, div_sup_y=0.0, params={"r_cut": r_cut},
        )
        return X, Y, meta

    if name == "rotation_dilation_cutoff":
        rotation = float(params.pop("rotation", 1.0))
        dilation = float(params.pop("dilation", 0.3))
        _reject_extra(name, params)
        A = dilation * np.eye(2) + rotation * _J_ROT
        X = _cutoff_linear_field(A, r_cut, box)
        Y = _cutoff_linear_field(_J_ROT, r_cut, box)

        def flow_x(pts, t):
            return math.exp(dilation * t) * (
                np.atleast_2d(pts) @ _rotation_matrix(rotation * t).T
            )

        meta = PresetPair(
            name=name, X=X, Y=Y, commuting=True, bracket=_zero_bracket,
            flow_x=flow_x,
            flow_y=lambda pts, s: np.atleast_2d(pts) @ _rotation_matrix(s).T,
            div_sup_x=abs(2.0 * dilation), div_sup_y=0.0,
            params={"r_cut": r_cut, "rotation": rotation, "dilation": dilation},
        )
        return X, Y, meta

    if name == "hamiltonian_pair":
        _reject_extra(name, params)
        X = _cutoff_linear_field(_J_ROT, r_cut, box)
        Y = _hamiltonian_speed_field(r_cut, box)

        def flow_y(pts, s):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            H = 0.5 * np.sum(pts * pts, axis=1)
            c, sn = np.cos(s * H), np.sin(s * H)
            out = np.empty_like(pts)
            out[:, 0] = c * pts[:, 0] - sn * pts[:, 1]
            out[:, 1] = sn * pts[:, 0] + c * pts[:, 1]
            return out

        meta = PresetPair(
            name=name, X=X, Y=Y, commuting=True, bracket=_zero_bracket,
            flow_x=lambda pts, t: np.atleast_2d(pts) @ _rotation_matrix(t).T,
            flow_y=flow_y,
            div_sup_x=0.0, div_sup_y=0.0, params={"r_cut": r_cut},
        )
        return X, Y, meta

    # nonlipschitz_shear_pair
    alpha = float(params.pop("alpha", 0.5))
    _reject_extra(name, params)
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    X, Y, flow_x, flow_y = _nonlipschitz_pair(alpha, r_cut, box)
    meta = PresetPair(
        name=name, X=X, Y=Y, commuting=True, bracket=_zero_bracket,
        flow_x=flow_x, flow_y=flow_y,
        div_sup_x=0.0, div_sup_y=0.0,
        params={"r_cut": r_cut, "alpha": alpha},
    )
    return X, Y, meta


def _reject_extra(name, params):
    if params:
        raise ParameterError(f"unknown parameters for preset {name!r}: {sorted(params)}")
