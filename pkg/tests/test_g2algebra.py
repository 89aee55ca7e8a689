"""Pointwise G2 algebra: metric map, star, type projections, torsion."""

import numpy as np
import pytest

from g2flow import g2algebra as g2
from g2flow import riemann, tables
from g2flow.lattice import FormField, Lattice, exterior_derivative

import oracles
from conftest import band_limited_form, closed_perturbed_phi

TWO_PI = 2.0 * np.pi


def pullback_batch(rng, n, scale=0.15):
    a = np.eye(7) + scale * rng.standard_normal((n, 7, 7))
    bad = np.linalg.cond(a) > 20.0
    while np.any(bad):
        a[bad] = np.eye(7) + scale * rng.standard_normal((int(bad.sum()), 7, 7))
        bad = np.linalg.cond(a) > 20.0
    neg = np.linalg.det(a) < 0
    a[neg, :, 0] *= -1.0
    return a


@pytest.fixture(scope="module")
def curved_batch():
    a = pullback_batch(np.random.default_rng(77), 200)
    phi = oracles.pullback_3form(a, g2.PHI0)
    g, vol = g2.metric_from_phi(phi)
    g_inv = np.linalg.inv(g)
    psi = g2.hodge_star(phi, 3, g=g, g_inv=g_inv, vol=vol, det_g=vol * vol)
    return phi, a, g, g_inv, vol, psi


# --- model forms ---------------------------------------------------------------

def test_model_form_components():
    pos3, pos4 = tables.index_position(3), tables.index_position(4)
    assert g2.PHI0[pos3[(0, 1, 2)]] == 1.0
    assert g2.PHI0[pos3[(1, 4, 6)]] == -1.0  # e257 carries the minus sign
    assert np.sum(g2.PHI0 != 0) == 7
    assert g2.PSI0[pos4[(3, 4, 5, 6)]] == 1.0
    assert g2.PSI0[pos4[(0, 1, 3, 6)]] == -1.0  # e1247
    assert np.sum(g2.PSI0 != 0) == 7


# --- metric map ----------------------------------------------------------------

def test_metric_of_model_form_is_identity():
    g, vol = g2.metric_from_phi(g2.PHI0)
    assert np.max(np.abs(g - np.eye(7))) < 1e-14
    assert abs(vol - 1.0) < 1e-14


def test_metric_equivariance_under_pullbacks(rng):
    # oracle applies the pullback to the euclidean metric directly: A^T A
    a = pullback_batch(rng, 100)
    phi = oracles.pullback_3form(a, g2.PHI0)
    g, vol = g2.metric_from_phi(phi)
    expect = np.einsum("...ai,...aj->...ij", a, a)
    assert np.max(np.abs(g - expect)) < 1e-10
    assert np.max(np.abs(vol - np.abs(np.linalg.det(a)))) < 1e-10


def test_metric_scaling_homogeneity():
    # lambda = 8 gives g = 4 id (g scales as lambda^(2/3)); cross-checked
    # against the pullback oracle with A = 2 id
    g8, vol8 = g2.metric_from_phi(8.0 * g2.PHI0)
    assert np.max(np.abs(g8 - 4.0 * np.eye(7))) < 1e-12
    a = 2.0 * np.eye(7)[None]
    phi = oracles.pullback_3form(a, g2.PHI0)
    assert np.max(np.abs(phi[0] - 8.0 * g2.PHI0)) < 1e-12
    assert abs(vol8 - 2.0 ** 7) < 1e-10


def test_not_positive_raised():
    with pytest.raises(g2.NotPositive):
        g2.metric_from_phi(-g2.PHI0)


def test_is_positive_cases(rng):
    assert bool(g2.is_positive(g2.PHI0))
    assert not bool(g2.is_positive(-g2.PHI0))
    small = g2.PHI0 + 0.01 * rng.standard_normal((50, 35))
    assert np.all(g2.is_positive(small))
    assert not np.any(g2.is_positive(np.zeros((3, 35))))


# --- hodge star ----------------------------------------------------------------

def test_star_model_phi_is_model_psi():
    assert np.array_equal(g2.hodge_star(g2.PHI0, 3), g2.PSI0)
    assert np.array_equal(g2.hodge_star(g2.PSI0, 4), g2.PHI0)


def test_star_one_is_volume_form(curved_batch):
    phi, a, g, g_inv, vol, psi = curved_batch
    ones = np.ones(vol.shape + (1,))
    star1 = g2.hodge_star(ones, 0, g=g, g_inv=g_inv, vol=vol, det_g=vol * vol)
    assert np.max(np.abs(star1[..., 0] - vol)) < 1e-12


@pytest.mark.parametrize("k", range(8))
def test_star_involution_random_metric(rng, k):
    a = pullback_batch(rng, 100)
    g = np.einsum("...ai,...aj->...ij", a, a)
    g_inv = np.linalg.inv(g)
    det_g = np.linalg.det(g)
    vol = np.sqrt(det_g)
    alpha = rng.standard_normal((100, tables.num_components(k)))
    ss = g2.hodge_star(g2.hodge_star(alpha, k, g=g, g_inv=g_inv, vol=vol, det_g=det_g),
                       7 - k, g=g, g_inv=g_inv, vol=vol, det_g=det_g)
    assert np.max(np.abs(ss - alpha)) < 1e-11


def test_wedge_with_star_gives_inner_product(rng, curved_batch):
    phi, a, g, g_inv, vol, psi = curved_batch
    alpha = rng.standard_normal((200, 35))
    beta = rng.standard_normal((200, 35))
    top = g2.wedge_components(alpha, 3, g2.hodge_star(
        beta, 3, g=g, g_inv=g_inv, vol=vol, det_g=vol * vol), 4)
    ip = g2.form_inner(alpha, beta, 3, g_inv=g_inv, g=g, det_g=vol * vol)
    assert np.max(np.abs(top[..., 0] - ip * vol)) < 1e-10 * np.max(np.abs(top))


def test_structure_norms_are_seven(curved_batch):
    phi, a, g, g_inv, vol, psi = curved_batch
    n_phi = g2.form_inner(phi, phi, 3, g_inv=g_inv, g=g, det_g=vol * vol)
    n_psi = g2.form_inner(psi, psi, 4, g_inv=g_inv, g=g, det_g=vol * vol)
    assert np.max(np.abs(n_phi - 7.0)) < 1e-10
    assert np.max(np.abs(n_psi - 7.0)) < 1e-10


# --- type projections -----------------------------------------------------------

def test_project_2form_eigenbasis(curved_batch):
    phi, a, g, g_inv, vol, psi = curved_batch
    det_g = vol * vol
    # X . phi is pure 7-type for all basis vectors X
    for i in range(7):
        x = np.zeros((1, 7))
        x[0, i] = 1.0
        xphi = np.einsum("iop,si,sp->so", tables.interior_table(3), x,
                         phi[:1])
        b7, b14 = g2.project_2form(xphi, phi[:1], g[:1], g_inv[:1], vol[:1],
                                   det_g=det_g[:1])
        assert np.max(np.abs(b14)) < 1e-11
        assert np.max(np.abs(b7 - xphi)) < 1e-11


def test_project_2form_defining_relations(rng, curved_batch):
    phi, a, g, g_inv, vol, psi = curved_batch
    det_g = vol * vol
    beta = rng.standard_normal((200, 21))
    b7, b14 = g2.project_2form(beta, phi, g, g_inv, vol, det_g=det_g)
    assert np.max(np.abs(b7 + b14 - beta)) < 1e-12
    # beta7 ^ phi = 2 * beta7 and beta14 ^ psi = 0
    w7 = g2.wedge_components(b7, 2, phi, 3)
    star_b7 = g2.hodge_star(b7, 2, g=g, g_inv=g_inv, vol=vol, det_g=det_g)
    assert np.max(np.abs(w7 - 2.0 * star_b7)) < 1e-10 * max(np.max(np.abs(w7)), 1)
    assert np.max(np.abs(g2.wedge_components(b14, 2, psi, 4))) < 1e-10 * np.max(np.abs(beta))
    ip = g2.form_inner(b7, b14, 2, g_inv=g_inv, g=g, det_g=det_g)
    assert np.max(np.abs(ip)) < 1e-11 * np.max(np.abs(beta)) ** 2


def test_projector_matrices_2form_eigen_oracle(rng):
    # brute-force 21 x 21 matrices: eigenvalues of *(. ^ phi) are 2 and -1
    # with multiplicities 7 and 14; projector traces are 7 and 14
    a = pullback_batch(rng, 1)
    phi = oracles.pullback_3form(a, g2.PHI0)[0]
    g, vol = g2.metric_from_phi(phi)
    g_inv = np.linalg.inv(g)
    det_g = vol * vol
    basis = np.eye(21)
    lmat = g2.hodge_star(g2.wedge_components(basis, 2, phi, 3), 5,
                         g=g, g_inv=g_inv, vol=vol, det_g=det_g).T
    eig = np.sort(np.linalg.eigvals(lmat).real)
    assert np.allclose(eig[:14], -1.0, atol=1e-9)
    assert np.allclose(eig[14:], 2.0, atol=1e-9)
    b7, b14 = g2.project_2form(basis, phi, g, g_inv, vol, det_g=det_g)
    assert abs(np.trace(b7) - 7.0) < 1e-10
    assert abs(np.trace(b14) - 14.0) < 1e-10


def test_project_3form_parts(curved_batch, rng):
    phi, a, g, g_inv, vol, psi = curved_batch
    det_g = vol * vol
    # gamma = phi -> (phi, 0, 0)
    p1, p7, p27 = g2.project_3form(phi, phi, psi, g, g_inv, vol, det_g=det_g)
    assert np.max(np.abs(p1 - phi)) < 1e-10
    assert np.max(np.abs(p7)) < 1e-10
    assert np.max(np.abs(p27)) < 1e-10
    # gamma = X . psi -> pure 7-type
    x = rng.standard_normal((200, 7))
    xpsi = np.einsum("iop,...i,...p->...o", tables.interior_table(4), x, psi)
    q1, q7, q27 = g2.project_3form(xpsi, phi, psi, g, g_inv, vol, det_g=det_g)
    assert np.max(np.abs(q1)) < 1e-9
    assert np.max(np.abs(q27)) < 1e-9
    assert np.max(np.abs(q7 - xpsi)) < 1e-9
    # 27-part kills both wedges
    gamma = rng.standard_normal((200, 35))
    r1, r7, r27 = g2.project_3form(gamma, phi, psi, g, g_inv, vol, det_g=det_g)
    assert np.max(np.abs(r1 + r7 + r27 - gamma)) < 1e-11
    assert np.max(np.abs(g2.wedge_components(r27, 3, phi, 3))) < 1e-10 * np.max(np.abs(gamma))
    assert np.max(np.abs(g2.wedge_components(r27, 3, psi, 4))) < 1e-10 * np.max(np.abs(gamma))


def test_projector_matrices_3form_traces(rng):
    a = pullback_batch(rng, 1)
    phi = oracles.pullback_3form(a, g2.PHI0)[0]
    g, vol = g2.metric_from_phi(phi)
    g_inv = np.linalg.inv(g)
    psi = g2.hodge_star(phi, 3, g=g, g_inv=g_inv, vol=vol, det_g=vol * vol)
    basis = np.eye(35)
    p1, p7, p27 = g2.project_3form(basis, phi, psi, g, g_inv, vol, det_g=vol * vol)
    for p, t in ((p1, 1.0), (p7, 7.0), (p27, 27.0)):
        assert abs(np.trace(p) - t) < 1e-9
        # projector idempotence via the eigen-decomposition oracle
        eig = np.sort(np.linalg.eigvals(p.T).real)
        assert np.allclose(eig, np.concatenate([np.zeros(35 - int(t)),
                                                np.ones(int(t))]), atol=1e-8)


# --- i_phi / j_phi --------------------------------------------------------------

def test_i_phi_of_metric_is_three_phi(curved_batch):
    phi, a, g, g_inv, vol, psi = curved_batch
    assert np.max(np.abs(g2.i_phi(g, phi, g_inv) - 3.0 * phi)) < 1e-12
    assert np.max(np.abs(g2.i_phi(np.zeros_like(g), phi, g_inv))) == 0.0


def test_i_phi_lands_in_one_plus_27(rng, curved_batch):
    phi, a, g, g_inv, vol, psi = curved_batch
    h = rng.standard_normal((200, 7, 7))
    h = 0.5 * (h + np.swapaxes(h, -1, -2))
    _, part7, _ = g2.project_3form(g2.i_phi(h, phi, g_inv), phi, psi, g, g_inv,
                                   vol, det_g=vol * vol)
    assert np.max(np.abs(part7)) < 1e-11 * np.max(np.abs(h))


def test_j_phi_of_phi_is_six_metric(curved_batch):
    phi, a, g, g_inv, vol, psi = curved_batch
    assert np.max(np.abs(g2.j_phi(phi, phi, vol) - 6.0 * g)) < 1e-11


def test_j_i_inverse_identity(rng, curved_batch):
    phi, a, g, g_inv, vol, psi = curved_batch
    h = rng.standard_normal((200, 7, 7))
    h = 0.5 * (h + np.swapaxes(h, -1, -2))
    jih = g2.j_phi(g2.i_phi(h, phi, g_inv), phi, vol)
    tr = np.einsum("...ij,...ij->...", g_inv, h)
    assert np.max(np.abs(jih - 4.0 * h - 2.0 * tr[..., None, None] * g)) < 1e-10


def test_j_raw_antisymmetric_on_7_type(curved_batch):
    phi, a, g, g_inv, vol, psi = curved_batch
    for i in range(7):
        x = np.zeros((1, 7))
        x[0, i] = 1.0
        xpsi = np.einsum("iop,si,sp->so", tables.interior_table(4), x, psi[:1])
        raw = g2.j_phi_raw(xpsi, phi[:1], vol[:1])
        sym = 0.5 * (raw + np.swapaxes(raw, -1, -2))
        assert np.max(np.abs(sym)) < 1e-10


def test_laplacian_norm_identity(rng, curved_batch):
    # |i_phi(h)|^2 = (tr h)^2 + 2 h_i^k h_k^i
    phi, a, g, g_inv, vol, psi = curved_batch
    h = rng.standard_normal((200, 7, 7))
    h = 0.5 * (h + np.swapaxes(h, -1, -2))
    ih = g2.i_phi(h, phi, g_inv)
    lhs = g2.form_inner(ih, ih, 3, g_inv=g_inv, g=g, det_g=vol * vol)
    hm = np.einsum("...ia,...aj->...ij", h, g_inv)
    rhs = np.einsum("...ii->...", hm) ** 2 + 2.0 * np.einsum("...ik,...ki->...", hm, hm)
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1.0, np.max(np.abs(rhs)))


# --- structure and torsion -------------------------------------------------------

def test_structure_caches_psi_consistent(rng):
    lat = Lattice((1, 2), 16, TWO_PI)
    st = g2.G2Structure.from_phi(FormField(lat, 3, np.broadcast_to(
        g2.PHI0, lat.grid_shape + (35,)).copy()))
    assert np.max(np.abs(st.psi.data - g2.PSI0)) < 1e-13
    assert np.max(np.abs(st.vol - 1.0)) < 1e-13


def test_full_torsion_zero_for_constant_structure():
    lat = Lattice((1,), 16, TWO_PI)
    st = g2.flat_reference(lat)
    assert np.max(np.abs(riemann.torsion_of(st))) < 1e-15


def test_full_torsion_skew_for_closed_structure(rng):
    lat = Lattice((1, 2), 32, TWO_PI)
    st = g2.G2Structure.from_phi(closed_perturbed_phi(lat, rng))
    t = riemann.torsion_of(st)
    assert np.max(np.abs(t + np.swapaxes(t, -1, -2))) < 1e-10


def test_full_torsion_reconstructs_nabla_phi(rng):
    lat = Lattice((1, 2), 32, TWO_PI)
    st = g2.G2Structure.from_phi(closed_perturbed_phi(lat, rng))
    t = riemann.torsion_of(st)
    t_up = np.einsum("...ia,...am->...im", t, st.g_inv)
    recon = np.einsum("...im,...mjkl->...ijkl", t_up,
                      g2.expand_form(st.psi.data, 4))
    assert np.max(np.abs(riemann.nabla_phi_of(st) - recon)) < 1e-9


def test_torsion_forms_vanish_for_torsion_free():
    lat = Lattice((1,), 16, TWO_PI)
    td = g2.extract_torsion_forms(g2.flat_reference(lat))
    for tau in (td.tau0, td.tau1, td.tau2, td.tau3):
        assert np.max(np.abs(tau)) < 1e-13


def test_torsion_forms_closed_case(rng):
    lat = Lattice((1, 2), 32, TWO_PI)
    st = g2.G2Structure.from_phi(closed_perturbed_phi(lat, rng))
    td = g2.extract_torsion_forms(st)
    assert np.max(np.abs(td.tau0)) < 1e-9
    assert np.max(np.abs(td.tau1)) < 1e-9
    assert np.max(np.abs(td.tau3)) < 1e-9
    # tau2 is 14-type: tau2 ^ psi = 0
    assert np.max(np.abs(g2.wedge_components(td.tau2, 2, st.psi.data, 4))) < 1e-9
    # T = -tau2 / 2
    t = riemann.torsion_of(st)
    assert np.max(np.abs(t + 0.5 * g2.expand_form(td.tau2, 2))) < 1e-10


def test_torsion_forms_conformal_oracle():
    # phi = f^3 phi0: the defining equations force tau1 parallel to d(log f)
    # and tau0 = tau2 = tau3 = 0; the constant is measured, both equations
    # are then verified as residuals.
    lat = Lattice((1, 2), 32, TWO_PI)
    x1, x2 = lat.coordinate(1), lat.coordinate(2)
    f = np.broadcast_to(np.exp(0.05 * np.sin(x1) + 0.03 * np.cos(x2)),
                        lat.grid_shape).copy()
    st = g2.G2Structure.from_phi(FormField(lat, 3, (f ** 3)[..., None] * g2.PHI0))
    td = g2.extract_torsion_forms(st)
    dlf = np.zeros(lat.grid_shape + (7,))
    for ax in lat.active_axes:
        dlf[..., ax - 1] = lat.partial_array(np.log(f), ax)
    c = np.sum(td.tau1 * dlf) / np.sum(dlf * dlf)
    assert np.max(np.abs(td.tau1 - c * dlf)) < 1e-12
    assert np.max(np.abs(td.tau0)) < 1e-12
    assert np.max(np.abs(td.tau2)) < 1e-12
    assert np.max(np.abs(td.tau3)) < 1e-12
    _assert_defining_equations(st, td, 1e-9)


def test_torsion_form_assembly_generic(rng):
    # generic (non-closed) small perturbation: T matches the tau-form assembly
    lat = Lattice((1, 2), 32, TWO_PI)
    pert = band_limited_form(lat, 3, rng, n_modes=4, amp=5e-3)
    st = g2.G2Structure.from_phi(FormField(lat, 3, g2.PHI0 + pert.data))
    td = g2.extract_torsion_forms(st)
    t = riemann.torsion_of(st)
    tau1_phi = np.einsum("...l,...la,...aij->...ij", td.tau1, st.g_inv,
                         g2.expand_form(st.phi.data, 3))
    bar_tau3 = g2.j_phi(td.tau3, st.phi.data, st.vol) / 4.0
    assert np.max(np.abs(g2.i_phi(bar_tau3, st.phi.data, st.g_inv) - td.tau3)) < 1e-12
    assembly = ((td.tau0[..., None, None] / 4.0) * st.g - tau1_phi - bar_tau3
                - 0.5 * g2.expand_form(td.tau2, 2))
    assert np.max(np.abs(t - assembly)) < 1e-9
    _assert_defining_equations(st, td, 1e-9)


def _assert_defining_equations(st, td, tol):
    dphi = exterior_derivative(st.phi)
    dpsi = exterior_derivative(st.psi)
    w13, w14 = tables.wedge_table(1, 3), tables.wedge_table(1, 4)
    w23 = tables.wedge_table(2, 3)
    rhs1 = (td.tau0[..., None] * st.psi.data
            + 3.0 * np.einsum("oaj,...a,...j->...o", w13, td.tau1, st.phi.data)
            + g2.hodge_star(td.tau3, 3, g=st.g, g_inv=st.g_inv, vol=st.vol,
                            det_g=st.det_g))
    scale1 = max(np.max(np.abs(dphi.data)), np.max(np.abs(st.phi.data)))
    assert np.max(np.abs(dphi.data - rhs1)) < tol * scale1
    rhs2 = (4.0 * np.einsum("oaj,...a,...j->...o", w14, td.tau1, st.psi.data)
            + np.einsum("oaj,...a,...j->...o", w23, td.tau2, st.phi.data))
    scale2 = max(np.max(np.abs(dpsi.data)), np.max(np.abs(st.psi.data)))
    assert np.max(np.abs(dpsi.data - rhs2)) < tol * scale2
