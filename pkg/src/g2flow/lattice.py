"""Periodic fields on a flat 7-torus with up to three active coordinate axes.

Fields are constant along inactive axes, so storage and differentiation are
reduced to the active grid while the fiber algebra stays fully 7-dimensional.
Grid layout is site-major (one grid axis per active coordinate axis) with the
component axes trailing, in lexicographic multi-index order.
"""

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from . import tables

TWO_PI = 2.0 * np.pi

SCHEMES = ("spectral", "fd4")


def fft_workers() -> int:
    """Worker cap for FFT passes, from G2FLOW_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("G2FLOW_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Lattice:
    """Discretization of the 7-torus: `n` points per active axis, period `L`.

    active_axes uses the coordinate labels 1..7. Inactive axes carry no
    storage and are assigned the fixed period 2*pi, which enters integrals
    as the constant factor (2*pi)^(7-a).
    """

    active_axes: tuple
    points_per_axis: int
    period: float
    scheme: str = "spectral"

    def __post_init__(self):
        axes = tuple(int(ax) for ax in self.active_axes)
        object.__setattr__(self, "active_axes", axes)
        if not 1 <= len(axes) <= 3:
            raise ValueError("need 1 to 3 active axes")
        if len(set(axes)) != len(axes) or any(not 1 <= ax <= 7 for ax in axes):
            raise ValueError(f"active axes must be distinct labels in 1..7, got {axes}")
        if tuple(sorted(axes)) != axes:
            raise ValueError("active axes must be sorted")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown derivative scheme {self.scheme!r}")
        n = self.points_per_axis
        if self.scheme == "spectral":
            if n < 8 or n % 2:
                raise ValueError("spectral scheme needs even n >= 8")
        elif n < 5:
            raise ValueError("fd4 stencil needs n >= 5")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def ndim_active(self) -> int:
        return len(self.active_axes)

    @property
    def grid_shape(self) -> tuple:
        return (self.points_per_axis,) * self.ndim_active

    @property
    def site_count(self) -> int:
        return self.points_per_axis ** self.ndim_active

    @property
    def spacing(self) -> float:
        return self.period / self.points_per_axis

    @property
    def cell_weight(self) -> float:
        """Integration weight per site: h^a times (2*pi)^(7-a) for inactive axes."""
        a = self.ndim_active
        return self.spacing ** a * TWO_PI ** (7 - a)

    def coordinate(self, axis: int) -> np.ndarray:
        """Grid values of coordinate `axis` (1..7), broadcastable to grid_shape."""
        if axis not in self.active_axes:
            return np.zeros((1,) * self.ndim_active)
        i = self.active_axes.index(axis)
        x = self.spacing * np.arange(self.points_per_axis)
        shape = [1] * self.ndim_active
        shape[i] = self.points_per_axis
        return x.reshape(shape)

    def partial_array(self, data: np.ndarray, axis: int) -> np.ndarray:
        """d/dx_axis of gridded data (trailing component axes untouched)."""
        if axis not in self.active_axes:
            return np.zeros_like(data)
        i = self.active_axes.index(axis)
        if self.scheme == "spectral":
            n = self.points_per_axis
            freq = np.fft.rfftfreq(n, d=1.0 / n)  # 0..n/2
            mult = 1j * (TWO_PI / self.period) * freq
            mult[-1] = 0.0  # Nyquist mode has no well-defined odd derivative
            shape = [1] * data.ndim
            shape[i] = mult.size
            spec = scipy.fft.rfft(data, axis=i, workers=fft_workers())
            spec *= mult.reshape(shape)
            return scipy.fft.irfft(spec, n=n, axis=i, workers=fft_workers())
        h = self.spacing
        p1 = np.roll(data, -1, axis=i)
        p2 = np.roll(data, -2, axis=i)
        m1 = np.roll(data, 1, axis=i)
        m2 = np.roll(data, 2, axis=i)
        return (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)

    def integrate(self, values: np.ndarray, vol_density=None) -> float:
        """Riemann sum of a scalar field against vol_density (default 1).

        Includes the (2*pi)^(7-a) factor from the inactive axes; with the
        euclidean metric, unit integrand and L = 2*pi this returns (2*pi)^7.
        """
        if vol_density is not None:
            values = values * vol_density
        return float(np.sum(values) * self.cell_weight)

    def site_mean(self, data: np.ndarray) -> np.ndarray:
        """Mean over grid axes (the harmonic / zero-mode part per component)."""
        a = self.ndim_active
        return data.mean(axis=tuple(range(a)))


def _freeze(data: np.ndarray) -> np.ndarray:
    data = np.ascontiguousarray(data, dtype=np.float64)
    data.flags.writeable = False
    return data


@dataclass(frozen=True)
class FormField:
    """Field of alternating k-covectors, C(7,k) components per site."""

    lattice: Lattice
    degree: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        ncomp = tables.num_components(self.degree)
        expected = self.lattice.grid_shape + (ncomp,)
        if self.data.shape != expected:
            raise ValueError(f"form data shape {self.data.shape}, expected {expected}")
        object.__setattr__(self, "data", _freeze(self.data))

    @classmethod
    def zero(cls, lattice: Lattice, degree: int) -> "FormField":
        shape = lattice.grid_shape + (tables.num_components(degree),)
        return cls(lattice, degree, np.zeros(shape))

    @classmethod
    def constant(cls, lattice: Lattice, degree: int, components) -> "FormField":
        comp = np.asarray(components, dtype=np.float64)
        data = np.broadcast_to(comp, lattice.grid_shape + comp.shape).copy()
        return cls(lattice, degree, data)

    def replace_data(self, data: np.ndarray) -> "FormField":
        return FormField(self.lattice, self.degree, data)

    def __add__(self, other: "FormField") -> "FormField":
        _check_same(self, other)
        return self.replace_data(self.data + other.data)

    def __sub__(self, other: "FormField") -> "FormField":
        _check_same(self, other)
        return self.replace_data(self.data - other.data)

    def __mul__(self, scalar) -> "FormField":
        return self.replace_data(self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "FormField":
        return self.replace_data(-self.data)

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0


@dataclass(frozen=True)
class TensorField:
    """Dense tensor field; variance is a string of 'u'/'d' slot markers."""

    lattice: Lattice
    variance: str
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if any(c not in "ud" for c in self.variance):
            raise ValueError("variance markers must be 'u' or 'd'")
        expected = self.lattice.grid_shape + (7,) * len(self.variance)
        if self.data.shape != expected:
            raise ValueError(f"tensor data shape {self.data.shape}, expected {expected}")
        object.__setattr__(self, "data", _freeze(self.data))

    @property
    def rank(self) -> int:
        return len(self.variance)

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0


def _check_same(a, b):
    if a.lattice is not b.lattice and a.lattice != b.lattice:
        raise ValueError("fields live on different lattices")
    if getattr(a, "degree", None) != getattr(b, "degree", None):
        raise ValueError("degree mismatch")


def partial_derivative(f, axis: int):
    """Componentwise coordinate derivative along `axis` (1..7)."""
    if not 1 <= axis <= 7:
        raise ValueError("axis must be in 1..7")
    if isinstance(f, FormField):
        return f.replace_data(f.lattice.partial_array(f.data, axis))
    return TensorField(f.lattice, f.variance, f.lattice.partial_array(f.data, axis))


def exterior_derivative(alpha: FormField) -> FormField:
    """d on compressed k-forms via alternating sums of coordinate partials."""
    k = alpha.degree
    if k >= 7:
        raise ValueError("cannot apply d to a 7-form")
    table = tables.ext_d_table(k)
    lat = alpha.lattice
    out = np.zeros(lat.grid_shape + (tables.num_components(k + 1),))
    for axis in lat.active_axes:
        d_ax = lat.partial_array(alpha.data, axis)
        out += np.einsum("oi,...i->...o", table[axis - 1], d_ax)
    return FormField(lat, k + 1, out)


def wedge(alpha: FormField, beta: FormField) -> FormField:
    """Pointwise exterior product."""
    k, l = alpha.degree, beta.degree
    if k + l > 7:
        raise ValueError("wedge degree exceeds 7")
    table = tables.wedge_table(k, l)
    data = np.einsum("oij,...i,...j->...o", table, alpha.data, beta.data)
    return FormField(alpha.lattice, k + l, data)


def interior_product(x: TensorField, alpha: FormField) -> FormField:
    """Contraction of a vector field into the first slot of a k-form."""
    if x.variance != "u":
        raise ValueError("interior product needs a contravariant vector field")
    k = alpha.degree
    if k < 1:
        raise ValueError("interior product needs degree >= 1")
    table = tables.interior_table(k)
    data = np.einsum("ioj,...i,...j->...o", table, x.data, alpha.data)
    return FormField(alpha.lattice, k - 1, data)


def integrate(f: FormField, metric=None, vol_density=None) -> float:
    """Integral of a scalar (degree-0) field over the torus."""
    if f.degree != 0:
        raise ValueError("integrate expects a degree-0 field")
    values = f.data[..., 0]
    if vol_density is None and metric is not None:
        vol_density = np.sqrt(np.linalg.det(metric))
    return f.lattice.integrate(values, vol_density)
