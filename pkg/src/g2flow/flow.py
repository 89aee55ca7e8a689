"""Right-hand sides and time integration for the Laplacian flows.

Both flow kinds return the rate of change of phi as an explicitly exact form
(d of a 2-form), so closedness and the cohomology class are preserved to
roundoff by any linear time integrator; no post-step projection is applied.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import riemann
from .g2algebra import G2Structure, NotPositive, expand_form, i_phi
from .lattice import FormField, exterior_derivative, interior_product

KINDS = ("laplacian", "deturck")

# Post-step structural tolerances, relative to max|phi|.
CLOSED_TOL = 1e-9
HARMONIC_TOL = 1e-10

# Weight of the trace direction in the gauge vector (see
# riemann.deturck_vector); zero makes the gauge-fixed flow linearize to the
# negative rough Laplacian at a torsion-free point.
DEFAULT_DETURCK_A = 0.0


class NotClosed(Exception):
    """Raised when a closed-structure formula is applied to a non-closed form."""


class StepFailed(Exception):
    """Raised after repeated step rejections (positivity loss or blow-up)."""

    def __init__(self, message, state=None, step=None):
        super().__init__(message)
        self.state = state
        self.step = step


@dataclass(frozen=True)
class FlowState:
    """Time stamp, evolving structure and the fixed reference structure."""

    t: float
    structure: G2Structure
    reference: G2Structure
    kind: str
    deturck_a: float = DEFAULT_DETURCK_A

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}")

    def theta(self) -> np.ndarray:
        return self.structure.phi.data - self.reference.phi.data


@dataclass
class StepControl:
    """Time-step policy.

    With dt unset the step is cfl_coefficient * (L/n)^2 / s where s is the
    largest eigenvalue of g^{-1} over all sites (the symbol of the Hodge
    Laplacian is bounded by s |k|^2; cfl_coefficient <= 0.28 keeps the
    largest resolved mode inside the RK4 stability interval).
    """

    t_end: float
    dt: float = None
    cfl_coefficient: float = 0.2
    max_dt: float = np.inf
    stop_tolerance: float = 1e-10
    checkpoint_every: int = 200
    max_halvings: int = 10


def coexact_part(structure: G2Structure) -> FormField:
    """d* phi = -*d* phi, the 2-form potential of the Hodge Laplacian on closed phi."""
    return -1.0 * structure.star(exterior_derivative(structure.psi))


def codifferential(structure: G2Structure, alpha: FormField) -> FormField:
    """d* = (-1)^k * d * on k-forms of the 7-torus (adjoint of d)."""
    sign = -1.0 if alpha.degree % 2 else 1.0
    return sign * structure.star(exterior_derivative(structure.star(alpha)))


def hodge_laplacian(structure: G2Structure, alpha: FormField) -> FormField:
    """Hodge Laplacian d d* + d* d of any form in the structure's metric."""
    k = alpha.degree
    out = None
    if k >= 1:
        out = exterior_derivative(codifferential(structure, alpha))
    if k <= 6:
        term = codifferential(structure, exterior_derivative(alpha))
        out = term if out is None else out + term
    return out


def laplacian_phi_hodge(structure: G2Structure) -> FormField:
    """Hodge Laplacian of phi: d d* phi + d* d phi with d* = (-1)^k * d * ."""
    term1 = exterior_derivative(coexact_part(structure))
    dphi = exterior_derivative(structure.phi)
    term2 = structure.star(exterior_derivative(structure.star(dphi)))
    return term1 + term2


def intrinsic_h(structure: G2Structure) -> np.ndarray:
    """Symmetric tensor h with Laplacian(phi) = i_phi(h) for closed phi.

    h_ij = -nabla_m T_ni phi_j^mn - |T|^2 g_ij / 3 - T_i^l T_lj, symmetrized
    to remove the discretization-level antisymmetric residue.
    """
    t = riemann.torsion_of(structure)
    conn = riemann.connection_of(structure)
    lat = structure.lattice
    g, g_inv = structure.g, structure.g_inv
    nabla_t = riemann.covariant_derivative_array(t, "dd", conn.gamma, lat)
    phi_mix = np.einsum("...jab,...am,...bn->...jmn",
                        expand_form(structure.phi.data, 3), g_inv, g_inv)
    t_sq = riemann.tensor_norm_sq(t, "dd", g, g_inv)
    h = (-np.einsum("...mni,...jmn->...ij", nabla_t, phi_mix)
         - (t_sq / 3.0)[..., None, None] * g
         - np.einsum("...ia,...ab,...bj->...ij", t, g_inv, t))
    return 0.5 * (h + np.swapaxes(h, -1, -2))


def laplacian_phi_intrinsic(structure: G2Structure) -> FormField:
    """i_phi(h) form of the Laplacian; valid only for closed structures."""
    dphi_max = exterior_derivative(structure.phi).max_norm()
    if dphi_max > 1e-6 * max(structure.phi.max_norm(), 1e-300):
        raise NotClosed(f"dphi max-norm {dphi_max:.3e} too large for the closed formula")
    data = i_phi(intrinsic_h(structure), structure.phi.data, structure.g_inv)
    return FormField(structure.lattice, 3, data)


def flow_rhs(state: FlowState) -> FormField:
    """Rate of change of phi, returned as d(sigma) so exactness is structural."""
    structure = state.structure
    sigma = coexact_part(structure)
    if state.kind == "deturck":
        v = riemann.deturck_vector(structure, state.reference, state.deturck_a)
        sigma = sigma + interior_product(v, structure.phi)
    return exterior_derivative(sigma)


def max_metric_speed(structure: G2Structure) -> float:
    """Largest eigenvalue of g^{-1} over sites (flat-reference symbol bound)."""
    return float(np.max(np.linalg.eigvalsh(structure.g_inv)))


def propose_dt(state: FlowState, control: StepControl) -> float:
    if control.dt is not None:
        return min(control.dt, control.max_dt)
    lat = state.structure.lattice
    h = lat.spacing
    dt = control.cfl_coefficient * h * h / max_metric_speed(state.structure)
    return min(dt, control.max_dt)


def _validate(phi: FormField, reference: G2Structure) -> G2Structure:
    """Re-validate the FlowState invariants; raises on violation."""
    structure = G2Structure.from_phi(phi)  # NotPositive on positivity loss
    scale = max(phi.max_norm(), 1e-300)
    dphi_max = exterior_derivative(phi).max_norm()
    if dphi_max > CLOSED_TOL * scale:
        raise NotClosed(f"closedness violated: {dphi_max:.3e}")
    theta_mean = phi.lattice.site_mean(phi.data - reference.phi.data)
    if np.max(np.abs(theta_mean)) > HARMONIC_TOL * scale:
        raise NotClosed(f"harmonic part drifted: {np.max(np.abs(theta_mean)):.3e}")
    return structure


def step_rk4(state: FlowState, control: StepControl) -> FlowState:
    """One classical RK4 step with rejection and dt halving on invariant loss."""
    dt = propose_dt(state, control)
    phi = state.structure.phi
    for _ in range(control.max_halvings + 1):
        try:
            k1 = flow_rhs(state)
            s2 = G2Structure.from_phi(phi + (0.5 * dt) * k1)
            k2 = flow_rhs(replace(state, structure=s2))
            s3 = G2Structure.from_phi(phi + (0.5 * dt) * k2)
            k3 = flow_rhs(replace(state, structure=s3))
            s4 = G2Structure.from_phi(phi + dt * k3)
            k4 = flow_rhs(replace(state, structure=s4))
            new_phi = phi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            structure = _validate(new_phi, state.reference)
        except (NotPositive, NotClosed):
            dt *= 0.5
            continue
        return replace(state, t=state.t + dt, structure=structure)
    raise StepFailed(f"step rejected {control.max_halvings + 1} times at t={state.t:.6g}",
                     state=state)


def run_flow(initial: G2Structure, reference: G2Structure, kind: str,
             control: StepControl, sample_interval: int = 10,
             deturck_a: float = DEFAULT_DETURCK_A,
             record_cb=None, checkpoint_cb=None,
             t0: float = 0.0, step0: int = 0, emit_initial: bool = True):
    """Integrate to t_end (or to stop_tolerance on |theta|_L2), sampling diagnostics.

    Returns (final_state, records). record_cb/checkpoint_cb, when given, are
    called as record_cb(record) per sample and checkpoint_cb(state, step) per
    control.checkpoint_every accepted steps (and at the end). t0/step0 resume
    an interrupted run; emit_initial=False suppresses the duplicate sample at
    the resume point.
    """
    from .diagnostics import diagnostic_snapshot

    state = FlowState(t=t0, structure=initial, reference=reference,
                      kind=kind, deturck_a=deturck_a)
    records = []

    def sample(st):
        rec = diagnostic_snapshot(st)
        records.append(rec)
        if record_cb is not None:
            record_cb(rec)
        return rec

    if emit_initial:
        rec = sample(state)
    else:
        rec = diagnostic_snapshot(state)
    step = step0
    try:
        while state.t < control.t_end and np.sqrt(rec.l2_theta) >= control.stop_tolerance:
            state = step_rk4(state, control)
            step += 1
            if step % sample_interval == 0:
                rec = sample(state)
            if checkpoint_cb is not None and step % control.checkpoint_every == 0:
                checkpoint_cb(state, step)
    except StepFailed as exc:
        exc.step = step
        raise
    if step % sample_interval != 0:
        rec = sample(state)
    if checkpoint_cb is not None:
        checkpoint_cb(state, step)
    return state, records
