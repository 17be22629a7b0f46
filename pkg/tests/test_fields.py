import numpy as np
import pytest

import flowlab as fl
from flowlab.errors import (
    BoundaryMarginError,
    ParameterError,
    ResolutionError,
    UnknownPresetError,
)
from flowlab.fields import (
    Box,
    GridField,
    VecField,
    fd_consistency,
    fd_divergence,
    fd_jacobian,
    mollify,
    mollified_field,
    preset_pair,
    radial_cutoff,
    standard_mollifier,
)

BOX4 = Box([-4.0, -4.0], [4.0, 4.0])


def _plain_field(fn, sup=10.0, box=BOX4):
    return VecField(dim=2, eval=fn, box=box, sup_norm=sup, div_sup=10.0)


# ---------------------------------------------------------------------------
# finite differences

def test_fd_jacobian_identity_field():
    F = _plain_field(lambda p: p.copy())
    J = fd_jacobian(F, np.array([0.3, -0.7]), h=1e-4)
    np.testing.assert_allclose(J, np.eye(2), atol=1e-10)


def test_fd_jacobian_linear_field():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    F = _plain_field(lambda p: p @ A.T)
    J = fd_jacobian(F, np.array([1.0, 1.0]), h=1e-4)
    np.testing.assert_allclose(J, A, atol=1e-10)


def test_fd_jacobian_holder_field():
    # F = (-|y|^a sgn y, |x|^a sgn x), a = 1/2; off-diagonal a|0.25|^(a-1) = 1
    a = 0.5

    def fn(p):
        return np.stack(
            [-np.abs(p[:, 1]) ** a * np.sign(p[:, 1]),
             np.abs(p[:, 0]) ** a * np.sign(p[:, 0])],
            axis=1,
        )

    F = _plain_field(fn)
    z = np.array([0.25, 0.25])
    J = fd_jacobian(F, z, h=1e-5)
    expected = np.array([[0.0, -1.0], [1.0, 0.0]])
    np.testing.assert_allclose(J, expected, atol=1e-4)
    # Richardson consistency: halving h moves the estimate only at fd-error level
    assert fd_consistency(F, z, h=1e-5) < 1e-6


def test_fd_jacobian_boundary_margin():
    F = _plain_field(lambda p: p.copy())
    with pytest.raises(BoundaryMarginError):
        fd_jacobian(F, np.array([4.0, 0.0]), h=1e-4)
    with pytest.raises(ParameterError):
        fd_jacobian(F, np.array([0.0, 0.0]), h=0.0)


def test_fd_divergence_examples():
    rot = _plain_field(lambda p: np.stack([-p[:, 1], p[:, 0]], axis=1))
    assert abs(fd_divergence(rot, np.array([0.4, -0.2]))) < 1e-10
    dil = _plain_field(lambda p: p.copy())
    assert fd_divergence(dil, np.array([0.3, 0.1])) == pytest.approx(2.0, abs=1e-10)
    _, Y, _ = preset_pair("hamiltonian_pair")
    Yfd = _plain_field(Y.eval)
    assert abs(fd_divergence(Yfd, np.array([0.3, 0.2]))) < 1e-6


# ---------------------------------------------------------------------------
# mollifier kernel

def test_kernel_unit_mass_and_evenness():
    k = standard_mollifier(0.25, dim=2)
    cl = fl.grid_cloud(Box([-0.3, -0.3], [0.3, 0.3]), 256)
    mass = fl.integrate(lambda p: k.density(p), cl)
    assert mass == pytest.approx(1.0, abs=1e-8)
    pts = np.random.default_rng(3).uniform(-0.25, 0.25, (50, 2))
    np.testing.assert_allclose(k.density(pts), k.density(-pts), rtol=0, atol=0)


def test_kernel_profile_vanishes_at_support_edge():
    from flowlab.fields import bump_profile

    u = np.array([0.999, 0.9999, 1.0, 1.5])
    vals = bump_profile(u)
    assert vals[2] == 0.0 and vals[3] == 0.0
    assert vals[1] < vals[0] < 1e-100  # fast flat vanishing toward the edge


def test_kernel_stencil_weights():
    k = standard_mollifier(0.1, dim=2)
    offsets, w = k.stencil(0.025)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(w > 0)
    # symmetric stencil: odd moments vanish exactly
    np.testing.assert_allclose(w @ offsets, 0.0, atol=1e-18)
    with pytest.raises(ResolutionError):
        k.stencil(0.06)


# ---------------------------------------------------------------------------
# grid mollification

def _grid(fn, spacing=4.0 / 256):
    return GridField.from_function(fn, Box([-2, -2], [2, 2]), spacing)


def test_mollify_preserves_constants():
    gf = _grid(lambda p: np.tile([1.7, -0.4], (p.shape[0], 1)))
    k = standard_mollifier(0.0625, dim=2)
    out = mollify(gf, k)
    mask = gf.interior_mask(k.epsilon).reshape(out.samples.shape[:-1])
    assert np.max(np.abs(out.samples - gf.samples)[mask]) < 1e-12


def test_mollify_preserves_linear_fields():
    A = np.array([[0.3, 1.2], [-0.7, 0.5]])
    gf = _grid(lambda p: p @ A.T)
    k = standard_mollifier(0.0625, dim=2)
    out = mollify(gf, k)
    mask = gf.interior_mask(k.epsilon).reshape(out.samples.shape[:-1])
    assert np.max(np.abs(out.samples - gf.samples)[mask]) < 1e-10


def test_mollify_is_linear():
    rng = np.random.default_rng(7)
    s1 = rng.standard_normal((257, 257, 2))
    s2 = rng.standard_normal((257, 257, 2))
    box = Box([-2, -2], [2, 2])
    k = standard_mollifier(0.0625, dim=2)
    one = mollify(GridField(box, 4 / 256, 2.0 * s1 - 0.5 * s2), k)
    two = mollify(GridField(box, 4 / 256, s1), k)
    three = mollify(GridField(box, 4 / 256, s2), k)
    np.testing.assert_allclose(
        one.samples, 2.0 * two.samples - 0.5 * three.samples, atol=1e-12
    )


def test_mollify_sup_norm_never_grows():
    rng = np.random.default_rng(11)
    gf = GridField(Box([-2, -2], [2, 2]), 4 / 128, rng.standard_normal((129, 129, 2)))
    out = mollify(gf, standard_mollifier(0.125, dim=2))
    assert out.sup_norm() <= gf.sup_norm() * (1 + 1e-12)


def test_mollify_rejects_unresolved_kernel():
    gf = _grid(lambda p: p.copy(), spacing=4.0 / 64)
    with pytest.raises(ResolutionError):
        mollify(gf, standard_mollifier(0.05, dim=2))


def test_mollify_holder_sup_distance_decays():
    X, _, _ = preset_pair("nonlipschitz_shear_pair")
    gf = _grid(X.eval, spacing=4.0 / 512)
    sups = []
    for eps in (0.25, 0.125, 0.0625, 0.03125):
        out = mollify(gf, standard_mollifier(eps, dim=2))
        mask = gf.interior_mask(eps).reshape(out.samples.shape[:-1])
        sups.append(np.max(np.linalg.norm((out.samples - gf.samples)[mask], axis=-1)))
    assert all(b < a for a, b in zip(sups, sups[1:]))


def test_mollify_commutes_with_divergence():
    # divergence of the smoothed field vs smoothing of the divergence
    _, Y, _ = preset_pair("hamiltonian_pair")
    box = Box([-2, -2], [2, 2])
    spacing = 4.0 / 256
    k = standard_mollifier(0.0625, dim=2)
    smooth = mollify(GridField.from_function(Y.eval, box, spacing), k)

    def grid_div(samples):
        dx = np.gradient(samples[..., 0], spacing, axis=0)
        dy = np.gradient(samples[..., 1], spacing, axis=1)
        return dx + dy

    div_of_smooth = grid_div(smooth.samples)
    div_raw = grid_div(GridField.from_function(Y.eval, box, spacing).samples)
    smooth_of_div = mollify(
        GridField(box, spacing, np.stack([div_raw, np.zeros_like(div_raw)], axis=-1)), k
    ).samples[..., 0]
    mask = smooth.interior_mask(k.epsilon + 2 * spacing).reshape(div_of_smooth.shape)
    assert np.max(np.abs(div_of_smooth - smooth_of_div)[mask]) < 1e-3


def test_mollified_field_matches_grid_route_and_bounds():
    X, _, _ = preset_pair("nonlipschitz_shear_pair")
    k = standard_mollifier(0.1, dim=2)
    Xe = mollified_field(X, k)
    pts = np.random.default_rng(2).uniform(-1, 1, (100, 2))
    assert np.all(np.linalg.norm(Xe.eval(pts), axis=1) <= X.sup_norm * (1 + 1e-12))
    # constants pass through the stencil untouched
    C = _plain_field(lambda p: np.tile([0.3, -1.1], (p.shape[0], 1)))
    Ce = mollified_field(C, k)
    np.testing.assert_allclose(Ce.eval(pts), C.eval(pts), atol=1e-14)


def test_gridfield_csv_roundtrip(tmp_path):
    gf = _grid(lambda p: p @ np.array([[0.1, 0.4], [-0.2, 0.9]]).T, spacing=4.0 / 16)
    path = tmp_path / "field.csv"
    gf.save_csv(path)
    back = GridField.load_csv(path)
    assert back.spacing == gf.spacing
    np.testing.assert_array_equal(back.samples, gf.samples)


# ---------------------------------------------------------------------------
# presets

ALL_PRESETS = list(fl.PRESET_NAMES)


def test_unknown_preset_and_bad_params():
    with pytest.raises(UnknownPresetError):
        preset_pair("spiral")
    with pytest.raises(ParameterError):
        preset_pair("nonlipschitz_shear_pair", {"alpha": 1.5})
    with pytest.raises(ParameterError):
        preset_pair("hamiltonian_pair", {"r_cut": -1.0})
    with pytest.raises(ParameterError):
        preset_pair("constants", {"bogus": 2})


def test_nilpotent_bracket_oracle():
    X, Y, meta = preset_pair("nilpotent_shears")
    np.testing.assert_allclose(
        fl.lie_bracket(X, Y, np.array([1.0, 1.0])), [-1.0, 1.0], atol=1e-12
    )
    np.testing.assert_allclose(
        meta.bracket(np.array([[1.0, 1.0]]))[0], [-1.0, 1.0], atol=0
    )


def test_hamiltonian_fd_bracket_cancels():
    X, Y, _ = preset_pair("hamiltonian_pair")
    Xp = _plain_field(X.eval)
    Yp = _plain_field(Y.eval)
    br = fl.lie_bracket(Xp, Yp, np.array([0.3, 0.4]), h=1e-4)
    assert np.linalg.norm(br) < 1e-6


def test_constants_flows_commute_exactly():
    _, _, meta = preset_pair("constants")
    pts = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    for t, s in ((0.3, 1.2), (-0.7, 0.4)):
        a = meta.flow_x(meta.flow_y(pts, s), t)
        b = meta.flow_y(meta.flow_x(pts, t), s)
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("name", ALL_PRESETS)
def test_preset_divergence_matches_jacobian_trace(name, rng):
    X, Y, _ = preset_pair(name)
    pts = rng.uniform(-1, 1, (100, 2))
    if name == "nonlipschitz_shear_pair":
        pts[:, 0] = np.sign(pts[:, 0]) * np.maximum(np.abs(pts[:, 0]), 0.05)
    for F in (X, Y):
        tr = np.trace(F.jac(pts), axis1=1, axis2=2)
        dv = F.div(pts)
        np.testing.assert_allclose(dv, tr, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", ALL_PRESETS)
def test_preset_sup_norm_bounds_hold(name, rng):
    X, Y, _ = preset_pair(name)
    pts = rng.uniform(X.box.lo, X.box.hi, (200, 2))
    for F in (X, Y):
        assert np.all(np.linalg.norm(F.eval(pts), axis=1) <= F.sup_norm * (1 + 1e-12))


@pytest.mark.parametrize("name", ALL_PRESETS)
def test_preset_fd_jacobian_agrees_with_analytic(name, rng):
    X, Y, _ = preset_pair(name)
    pts = rng.uniform(-1, 1, (100, 2))
    if name == "nonlipschitz_shear_pair":
        # a.e. statement: keep the fd stencil away from the singular line
        pts[:, 0] = np.sign(pts[:, 0]) * np.maximum(np.abs(pts[:, 0]), 0.3)
    h = 1e-4
    for F in (X, Y):
        J = F.jac(pts)
        Jfd = fd_jacobian(F, pts, h=h)
        scale = 1.0 + np.abs(J)
        assert np.max(np.abs(J - Jfd) / scale) < 10 * h ** 2


def test_divergence_free_presets_fd_divergence():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, (100, 2))
    for name in ALL_PRESETS:
        X, Y, meta = preset_pair(name)
        for F, declared in ((X, meta.div_sup_x), (Y, meta.div_sup_y)):
            if declared == 0.0:
                q = pts.copy()
                if F.regularity == "sobolev":
                    q[:, 0] = np.sign(q[:, 0]) * np.maximum(np.abs(q[:, 0]), 0.05)
                assert np.max(np.abs(fd_divergence(F, q, h=1e-4))) < 1e-6


def test_cutoff_region_is_smooth_and_consistent():
    chi, chi_prime = radial_cutoff(1.0)
    r = np.linspace(0.0, 2.5, 400)
    c = chi(r)
    assert np.all(c[r <= 1.0] == 1.0)
    assert np.all(c[r >= 2.0] == 0.0)
    assert np.all(np.diff(c) <= 1e-15)
    # analytic derivative vs central difference in the transition band
    rr = np.linspace(1.05, 1.95, 50)
    h = 1e-6
    fd = (chi(rr + h) - chi(rr - h)) / (2 * h)
    np.testing.assert_allclose(chi_prime(rr), fd, atol=1e-6)


def test_preset_closed_form_flows_match_integrator(cfg):
    for name in ALL_PRESETS:
        X, Y, meta = preset_pair(name)
        pts = np.random.default_rng(1).uniform(-0.9, 0.9, (20, 2))
        if name == "nonlipschitz_shear_pair":
            pts[:, 0] = np.abs(pts[:, 0]) + 0.05  # stay off the kink
        got = fl.flow_points(X, cfg, pts, 0.4)
        want = meta.flow_x(pts, 0.4)
        np.testing.assert_allclose(got, want, atol=5e-9)


def test_vecfield_validation():
    with pytest.raises(ParameterError):
        VecField(dim=0, eval=lambda p: p, box=BOX4, sup_norm=1.0, div_sup=0.0)
    with pytest.raises(ParameterError):
        VecField(
            dim=2, eval=lambda p: p, box=BOX4, sup_norm=1.0, div_sup=0.0,
            regularity="analytic",
        )
    with pytest.raises(ParameterError):
        Box([0.0, 0.0], [0.0, 1.0])


def test_gridfield_shape_validation():
    box = Box([-1.0, -1.0], [1.0, 1.0])
    with pytest.raises(ParameterError):
        GridField(box=box, spacing=0.5, samples=np.zeros((4, 4, 2)))
    with pytest.raises(ParameterError):
        GridField(box=box, spacing=0.3, samples=np.zeros((5, 5, 2)))
    GridField(box=box, spacing=0.5, samples=np.zeros((5, 5, 2)))
