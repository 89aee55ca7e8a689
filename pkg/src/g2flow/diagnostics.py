"""Functionals, norms, spectral quantities and decay-rate estimation.

C^k channels of theta use flat reference derivatives (coordinate partials),
matching the fixed-metric norms in which the decay statements are made.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import flow, riemann
from .g2algebra import G2Structure
from .lattice import Lattice

TWO_PI = 2.0 * np.pi


class InsufficientData(Exception):
    """Not enough samples in the fit window."""


class NonPositiveSeries(Exception):
    """Decay fitting needs strictly positive norms."""


@dataclass
class TimeSeriesRecord:
    """One diagnostic snapshot of a flow state."""

    t: float
    l2_theta: float                # squared L2 norm of theta in the flat metric
    ck_theta: tuple                # sup |flat-derivative^k theta|, k = 0..3
    hitchin_h: float               # (1/7) integral of phi ^ *phi
    total_volume: float            # integral of sqrt(det g)
    torsion_l2: float              # integral of |T|^2 dv_g
    scalar_identity_residual: float  # max |R + |T|^2|
    lambda_max: float              # max (|Rm|^2 + |nabla T|^2)^(1/2)
    harmonic_residual: float       # max |grid mean of theta| per component
    rhs_cross_residual: float      # relative gap between the two RHS assemblies

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ck_theta"] = list(self.ck_theta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TimeSeriesRecord":
        d = dict(d)
        d["ck_theta"] = tuple(d["ck_theta"])
        return cls(**d)


@dataclass
class DecayFit:
    """Least-squares exponential-decay fit of a time series."""

    window: tuple
    fitted_rate: float
    r_squared: float
    lambda1: float


def hitchin_functional(structure: G2Structure) -> float:
    """Total volume (1/7) int phi ^ *phi; cross-checked against int sqrt(det g)."""
    via_wedge = _hitchin_via_wedge(structure)
    via_volume = total_volume(structure)
    gap = abs(via_wedge - via_volume)
    if gap > 1e-10 * max(abs(via_volume), 1e-300):
        raise RuntimeError(f"volume functional self-check failed: gap {gap:.3e}")
    return via_volume


def _hitchin_via_wedge(structure: G2Structure) -> float:
    from .g2algebra import wedge_components

    top = wedge_components(structure.phi.data, 3, structure.psi.data, 4)
    return structure.lattice.integrate(top[..., 0]) / 7.0


def total_volume(structure: G2Structure) -> float:
    return structure.lattice.integrate(structure.vol)


def lambda1_exact_forms(lattice: Lattice) -> float:
    """First Hodge-Laplacian eigenvalue on exact 3-forms of the flat torus.

    Exact forms d(beta) built from a Fourier mode k have eigenvalue
    |k|^2 (2 pi / L)^2; the lowest nonzero integer mode gives (2 pi / L)^2.
    """
    return (TWO_PI / lattice.period) ** 2


def flat_l2(lattice: Lattice, data: np.ndarray) -> float:
    """Squared flat L2 norm of a componentwise field."""
    comp_axes = tuple(range(lattice.ndim_active, data.ndim))
    return lattice.integrate(np.sum(data * data, axis=comp_axes))


def ck_channels(lattice: Lattice, data: np.ndarray, k_max: int = 3) -> tuple:
    """Sup-norms of the flat derivative stacks of orders 0..k_max."""
    out = []
    level = data
    for _ in range(k_max + 1):
        comp_axes = tuple(range(lattice.ndim_active, level.ndim))
        norms = np.sqrt(np.sum(level * level, axis=comp_axes))
        out.append(float(np.max(norms)))
        level = np.stack([lattice.partial_array(level, ax)
                          for ax in lattice.active_axes], axis=-1)
    return tuple(out)


def rayleigh_lowest_mode(lattice: Lattice) -> float:
    """Discrete Rayleigh quotient of the flat Hodge Laplacian on the lowest exact mode."""
    from .g2algebra import flat_reference
    from .lattice import FormField, exterior_derivative
    from . import tables

    reference = flat_reference(lattice)
    axis = lattice.active_axes[0]
    pair = tuple(sorted({1, 2, 3} - {axis}))[:2] if axis <= 3 else (1, 2)
    pos = tables.index_position(2)[tuple(p - 1 for p in pair)]
    beta = np.zeros(lattice.grid_shape + (21,))
    beta[..., pos] = np.broadcast_to(np.sin(TWO_PI / lattice.period
                                            * lattice.coordinate(axis)),
                                     lattice.grid_shape)
    theta = exterior_derivative(FormField(lattice, 2, beta))
    lap = flow.hodge_laplacian(reference, theta)
    num = lattice.integrate(np.sum(lap.data * theta.data, axis=-1))
    den = lattice.integrate(np.sum(theta.data * theta.data, axis=-1))
    return num / den


def fit_decay_rate(series, window=None, lambda1: float = None) -> DecayFit:
    """Least-squares slope of log(l2_theta) vs t; fitted_rate is -slope.

    series is a sequence of (t, l2_theta) pairs; the default window keeps the
    last 60% of samples to skip the nonlinear transient.
    """
    ts = np.array([s[0] for s in series], dtype=float)
    ys = np.array([s[1] for s in series], dtype=float)
    if window is None:
        if ts.size == 0:
            raise InsufficientData("empty series")
        window = (ts[0] + 0.4 * (ts[-1] - ts[0]), ts[-1])
    mask = (ts >= window[0]) & (ts <= window[1])
    ts, ys = ts[mask], ys[mask]
    if ts.size < 10:
        raise InsufficientData(f"only {ts.size} samples in window (need >= 10)")
    if np.any(ys <= 0):
        raise NonPositiveSeries("series must be strictly positive to fit a rate")
    logy = np.log(ys)
    coeffs = np.polyfit(ts, logy, 1)
    fit = np.polyval(coeffs, ts)
    ss_res = float(np.sum((logy - fit) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r_sq = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return DecayFit(window=(float(window[0]), float(window[1])),
                    fitted_rate=float(-coeffs[0]), r_squared=r_sq,
                    lambda1=lambda1 if lambda1 is not None else float("nan"))


def diagnostic_snapshot(state: flow.FlowState) -> TimeSeriesRecord:
    """Populate every channel of a TimeSeriesRecord from the current state."""
    structure, reference = state.structure, state.reference
    lat = structure.lattice
    theta = state.theta()

    t_tensor = riemann.torsion_of(structure)
    t_sq = riemann.tensor_norm_sq(t_tensor, "dd", structure.g, structure.g_inv)
    curv = riemann.curvature_of(structure)

    rhs_hodge = flow.laplacian_phi_hodge(structure)
    rhs_intr = flow.laplacian_phi_intrinsic(structure)
    scale = max(rhs_hodge.max_norm(), 1e-300)
    cross = (rhs_hodge - rhs_intr).max_norm() / scale if scale > 1e-250 else 0.0

    return TimeSeriesRecord(
        t=float(state.t),
        l2_theta=flat_l2(lat, theta),
        ck_theta=ck_channels(lat, theta),
        hitchin_h=_hitchin_via_wedge(structure),
        total_volume=total_volume(structure),
        torsion_l2=lat.integrate(t_sq, vol_density=structure.vol),
        scalar_identity_residual=float(np.max(np.abs(curv.scalar + t_sq))),
        lambda_max=float(np.max(riemann.lambda_monitor(structure))),
        harmonic_residual=float(np.max(np.abs(lat.site_mean(theta)))),
        rhs_cross_residual=float(cross),
    )
