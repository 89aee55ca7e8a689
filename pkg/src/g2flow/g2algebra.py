"""Pointwise G2 linear algebra on the 7-dimensional fiber.

The array-level functions act on trailing component axes and broadcast over
any leading batch/grid shape, so the same code serves single covectors,
randomized test batches and whole lattice fields. Field-level operations
(torsion-form extraction, the structure cache) live at the bottom.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import tables
from .lattice import FormField, Lattice, exterior_derivative

# Calibration of the metric map, frozen by requiring that the model 3-form
# produce the identity metric and unit volume density (see metric_from_phi).
_METRIC_SCALE = 6.0 ** (-2.0 / 9.0)
_VOL_SCALE = 6.0 ** (-7.0 / 9.0)


class NotPositive(Exception):
    """Raised when a 3-form fails the positivity (metric) condition."""


def _terms_to_components(terms, degree):
    comp = np.zeros(tables.num_components(degree))
    pos = tables.index_position(degree)
    for axes, coeff in terms:
        comp[pos[tuple(a - 1 for a in axes)]] = coeff
    return comp


# Model forms in the fixed frame: phi0 = e123+e145+e167+e246-e257-e347-e356,
# psi0 = e4567+e2367+e2345+e1357-e1346-e1256-e1247.
PHI0 = _terms_to_components(
    [((1, 2, 3), 1.0), ((1, 4, 5), 1.0), ((1, 6, 7), 1.0), ((2, 4, 6), 1.0),
     ((2, 5, 7), -1.0), ((3, 4, 7), -1.0), ((3, 5, 6), -1.0)], 3)
PSI0 = _terms_to_components(
    [((4, 5, 6, 7), 1.0), ((2, 3, 6, 7), 1.0), ((2, 3, 4, 5), 1.0),
     ((1, 3, 5, 7), 1.0), ((1, 3, 4, 6), -1.0), ((1, 2, 5, 6), -1.0),
     ((1, 2, 4, 7), -1.0)], 4)
PHI0.flags.writeable = False
PSI0.flags.writeable = False


def expand_form(comp: np.ndarray, k: int) -> np.ndarray:
    """Compressed storage -> full antisymmetric tensor with k trailing 7-axes."""
    full = comp @ tables.expand_table(k).T
    return full.reshape(comp.shape[:-1] + (7,) * k)


def compress_form(full: np.ndarray, k: int) -> np.ndarray:
    """Full antisymmetric tensor -> compressed increasing-multi-index storage."""
    flat = full.reshape(full.shape[:-k] + (7 ** k,)) if k else full
    return flat[..., tables.compress_positions(k)]


def _cubic_contraction(phi: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Coefficient of e^{1..7} in (e_i . phi) ^ (e_j . phi) ^ gamma."""
    u = np.einsum("iap,...p->...ia", tables.interior_table(3), phi)
    t = np.einsum("abc,...c->...ab", tables.triple_wedge_223(), gamma)
    return np.einsum("...ia,...ab,...jb->...ij", u, t, u)


def metric_from_phi(phi: np.ndarray, check: bool = True):
    """Metric and volume density of a positive 3-form.

    b_ij is the coefficient of the coordinate 7-form in
    (e_i . phi) ^ (e_j . phi) ^ phi; the returned metric is
    6^(-2/9) b / (det b)^(1/9), the unique scaling for which the model form
    gives the identity (for it, b = 6 * id). Volume density scales
    correspondingly as (det b)^(1/9) / 6^(7/9).

    Raises NotPositive when det b <= 0 or the candidate metric fails to be
    positive-definite, i.e. phi is not in the open GL+ orbit of the model.
    """
    b = _cubic_contraction(phi, phi)
    det_b = np.linalg.det(b)
    if check and np.any(det_b <= 0.0):
        raise NotPositive(f"det b <= 0 at {int(np.sum(det_b <= 0.0))} site(s)")
    scale = np.where(det_b > 0.0, np.abs(det_b), 1.0) ** (-1.0 / 9.0)
    g = _METRIC_SCALE * b * scale[..., None, None]
    if check:
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise NotPositive("metric candidate is not positive-definite") from None
    vol = _VOL_SCALE / scale
    return g, vol


def is_positive(phi: np.ndarray):
    """True where the 3-form defines a positive-definite metric."""
    b = _cubic_contraction(phi, phi)
    det_b = np.linalg.det(b)
    eig_min = np.linalg.eigvalsh(b)[..., 0]
    return (det_b > 0.0) & (eig_min > 0.0)


def compound_inverse_metric(g_inv: np.ndarray, k: int, g=None, det_g=None) -> np.ndarray:
    """Induced inverse metric on compressed k-forms (matrix of k x k minors).

    For k <= 3 the minors of g_inv are expanded directly; for k >= 4 the
    complementary-minor identity det(A^-1[I,K]) = s(I)s(K) det(A[K^c,I^c])/det A
    keeps everything at 3 x 3 minors of g.
    """
    if k <= 3:
        return tables.compound_matrix(g_inv, k)
    if g is None:
        g = np.linalg.inv(g_inv)
    if det_g is None:
        det_g = np.linalg.det(g)
    comp = tables.compound_matrix(g, 7 - k)
    cpos = tables.complement_positions(k)
    signs = tables.index_sum_signs(k)
    gathered = comp[..., cpos[:, None], cpos[None, :]]
    m = signs[:, None] * signs[None, :] * np.swapaxes(gathered, -1, -2)
    return m / det_g[..., None, None]


def raise_form(alpha: np.ndarray, k: int, g_inv: np.ndarray, g=None, det_g=None) -> np.ndarray:
    """All-indices-raised compressed k-form."""
    m = compound_inverse_metric(g_inv, k, g=g, det_g=det_g)
    return np.einsum("...ik,...k->...i", m, alpha)


def form_inner(alpha: np.ndarray, beta: np.ndarray, k: int, g_inv=None, g=None, det_g=None):
    """Pointwise metric inner product of two compressed k-forms."""
    if g_inv is None:
        return np.einsum("...i,...i->...", alpha, beta)
    raised = raise_form(alpha, k, g_inv, g=g, det_g=det_g)
    return np.einsum("...i,...i->...", raised, beta)


def hodge_star(alpha: np.ndarray, k: int, g=None, g_inv=None, vol=None, det_g=None) -> np.ndarray:
    """Metric Hodge star in the fixed orientation dx^1 ^ ... ^ dx^7.

    With no metric arguments the star is euclidean. vol is sqrt(det g) and is
    computed from g when not supplied.
    """
    if g is None and g_inv is None:
        raised = alpha
        if vol is None:
            vol = 1.0
    else:
        if g_inv is None:
            g_inv = np.linalg.inv(g)
        if det_g is None:
            det_g = np.linalg.det(g) if g is not None else 1.0 / np.linalg.det(g_inv)
        if vol is None:
            vol = np.sqrt(det_g)
        raised = raise_form(alpha, k, g_inv, g=g, det_g=det_g)
    src, sign = tables.star_tables(k)
    out = sign * raised[..., src]
    return out * np.asarray(vol)[..., None]


def i_phi(h: np.ndarray, phi: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """3-form i_phi(h) with components h_i^l phi_ljk + h_j^l phi_lki + h_k^l phi_lij.

    Maps symmetric 2-tensors into the 1 + 27 part; i_phi(g) = 3 phi.
    """
    phi_full = expand_form(phi, 3)
    h_mixed = np.einsum("...ia,...al->...il", h, g_inv)
    p = np.einsum("...il,...ljk->...ijk", h_mixed, phi_full)
    full = p + np.einsum("...abc->...cab", p) + np.einsum("...abc->...bca", p)
    return compress_form(full, 3)


def j_phi_raw(gamma: np.ndarray, phi: np.ndarray, vol) -> np.ndarray:
    """Unsymmetrized j: (u,v) -> *((u . phi) ^ (v . phi) ^ gamma)."""
    return _cubic_contraction(phi, gamma) / np.asarray(vol)[..., None, None]


def j_phi(gamma: np.ndarray, phi: np.ndarray, vol) -> np.ndarray:
    """Symmetric part of j_phi; inverse of i_phi up to 4 id + 2 tr."""
    raw = j_phi_raw(gamma, phi, vol)
    return 0.5 * (raw + np.swapaxes(raw, -1, -2))


def wedge_components(alpha: np.ndarray, k: int, beta: np.ndarray, l: int) -> np.ndarray:
    """Pointwise wedge on raw compressed components."""
    return np.einsum("oij,...i,...j->...o", tables.wedge_table(k, l), alpha, beta)


def project_2form(beta: np.ndarray, phi: np.ndarray, g, g_inv, vol, det_g=None):
    """Split a 2-form into its 7- and 14-dimensional type components.

    Uses the eigen-projectors of L: beta -> *(beta ^ phi), which acts as +2
    on the 7-part and -1 on the 14-part.
    """
    w = wedge_components(beta, 2, phi, 3)
    l_beta = hodge_star(w, 5, g=g, g_inv=g_inv, vol=vol, det_g=det_g)
    beta7 = (l_beta + beta) / 3.0
    return beta7, beta - beta7


def project_3form(gamma: np.ndarray, phi: np.ndarray, psi: np.ndarray,
                  g, g_inv, vol, det_g=None):
    """Split a 3-form into (1, 7, 27) type components.

    The 1-part is <gamma,phi> phi / 7; the 7-part is X . psi for the vector X
    solving the 7-component linear system (X . psi) ^ phi = gamma ^ phi; the
    27-part is the remainder.
    """
    f = form_inner(gamma, phi, 3, g_inv=g_inv, g=g, det_g=det_g) / 7.0
    gamma1 = f[..., None] * phi
    w33 = tables.wedge_table(3, 3)
    int_psi = np.einsum("amp,...p->...am", tables.interior_table(4), psi)
    mat = np.einsum("omj,...am,...j->...oa", w33, int_psi, phi)
    rhs = np.einsum("omj,...m,...j->...o", w33, gamma, phi)
    x = np.linalg.solve(mat, rhs[..., None])[..., 0]
    gamma7 = np.einsum("aop,...a,...p->...o", tables.interior_table(4), x, psi)
    return gamma1, gamma7, gamma - gamma1 - gamma7


def full_torsion(structure: "G2Structure", nabla_phi: np.ndarray) -> np.ndarray:
    """Full torsion 2-tensor T_ij from the covariant derivative of phi.

    T_i^j = (1/24) nabla_i phi_lmn psi^jlmn; the result satisfies
    nabla_i phi_jkl = T_i^m psi_mjkl.
    """
    gi = structure.g_inv
    up = expand_form(structure.psi.data, 4)
    up = np.einsum("...ja,...abcd->...jbcd", gi, up)
    up = np.einsum("...lb,...jbcd->...jlcd", gi, up)
    up = np.einsum("...mc,...jlcd->...jlmd", gi, up)
    up = np.einsum("...nd,...jlmd->...jlmn", gi, up)
    t_mixed = np.einsum("...ilmn,...jlmn->...ij", nabla_phi, up) / 24.0
    return np.einsum("...ia,...aj->...ij", t_mixed, structure.g)


@dataclass
class TorsionData:
    """Intrinsic torsion forms; the full tensor T is attached when computed."""

    tau0: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray
    tau3: np.ndarray
    T: np.ndarray = None


class G2Structure:
    """A positive 3-form field with its cached derived geometry."""

    def __init__(self, phi: FormField, g, g_inv, vol, psi: FormField):
        self.phi = phi
        self.g = g
        self.g_inv = g_inv
        self.vol = vol
        self.psi = psi
        self._cache = {}

    @classmethod
    def from_phi(cls, phi: FormField) -> "G2Structure":
        g, vol = metric_from_phi(phi.data)
        g_inv = np.linalg.inv(g)
        det_g = vol * vol
        psi_data = hodge_star(phi.data, 3, g=g, g_inv=g_inv, vol=vol, det_g=det_g)
        psi = FormField(phi.lattice, 4, psi_data)
        return cls(phi, g, g_inv, vol, psi)

    @property
    def lattice(self) -> Lattice:
        return self.phi.lattice

    @property
    def det_g(self) -> np.ndarray:
        return self.vol * self.vol

    def star(self, alpha: FormField) -> FormField:
        data = hodge_star(alpha.data, alpha.degree, g=self.g, g_inv=self.g_inv,
                          vol=self.vol, det_g=self.det_g)
        return FormField(self.lattice, 7 - alpha.degree, data)

    def inner(self, alpha: FormField, beta: FormField) -> np.ndarray:
        if alpha.degree != beta.degree:
            raise ValueError("degree mismatch")
        return form_inner(alpha.data, beta.data, alpha.degree,
                          g_inv=self.g_inv, g=self.g, det_g=self.det_g)


def flat_reference(lattice: Lattice) -> G2Structure:
    """The torsion-free model structure, constant over the lattice."""
    phi = FormField.constant(lattice, 3, PHI0)
    return G2Structure.from_phi(phi)


def extract_torsion_forms(structure: G2Structure) -> TorsionData:
    """Torsion forms (tau0, tau1, tau2, tau3) from dphi and dpsi.

    dphi = tau0 psi + 3 tau1 ^ phi + *tau3 is resolved through the type
    decomposition of *(dphi); tau2 then solves
    dpsi - 4 tau1 ^ psi = tau2 ^ phi, a pointwise 21 x 21 linear system.
    """
    phi, psi = structure.phi, structure.psi
    g, g_inv, vol, det_g = structure.g, structure.g_inv, structure.vol, structure.det_g
    dphi = exterior_derivative(phi)
    dpsi = exterior_derivative(psi)

    v3 = hodge_star(dphi.data, 4, g=g, g_inv=g_inv, vol=vol, det_g=det_g)
    v1, v7, v27 = project_3form(v3, phi.data, psi.data, g, g_inv, vol, det_g=det_g)
    tau0 = form_inner(v3, phi.data, 3, g_inv=g_inv, g=g, det_g=det_g) / 7.0
    tau3 = v27

    # 3 tau1 ^ phi equals the 7-part of dphi; solve the normal equations.
    star_v7 = hodge_star(v7, 3, g=g, g_inv=g_inv, vol=vol, det_g=det_g)
    m1 = 3.0 * np.einsum("oaj,...j->...oa", tables.wedge_table(1, 3), phi.data)
    ata = np.einsum("...oa,...ob->...ab", m1, m1)
    atb = np.einsum("...oa,...o->...a", m1, star_v7)
    tau1 = np.linalg.solve(ata, atb[..., None])[..., 0]

    rho = dpsi.data - 4.0 * np.einsum(
        "oaj,...a,...j->...o", tables.wedge_table(1, 4), tau1, psi.data)
    m2 = np.einsum("ocj,...j->...oc", tables.wedge_table(2, 3), phi.data)
    tau2 = np.linalg.solve(m2, rho[..., None])[..., 0]
    return TorsionData(tau0=tau0, tau1=tau1, tau2=tau2, tau3=tau3)
