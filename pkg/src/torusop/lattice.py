"""Discretized flat torus: grids, sections, regions, Sobolev norms and cutoffs.

The torus has ``dim`` axes of length ``2*pi*L`` sampled at ``N`` points each.
Sections are complex vector-valued grid functions; the Fourier transform is
the unitary FFT, so all Sobolev norms are diagonal in the frequency basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

__all__ = [
    "GridSpec",
    "Section",
    "FrequencySection",
    "Region",
    "BumpFunction",
    "fourier",
    "inverse_fourier",
    "sobolev_norm",
    "restricted_seminorm",
    "cutoff_eta",
    "lipschitz_bump",
    "smoothstep",
    "ball_region",
    "translate_section",
]


def smoothstep(u):
    """C^2 step: 1 for u <= 0, 0 for u >= 1, quintic polynomial in between."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return 1.0 - u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the discretized torus (R / 2*pi*L*Z)^dim with fiber C^r."""

    dim: int
    points_per_axis: int
    period_scale: float
    fiber_dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        n = self.points_per_axis
        if n < 4 or n % 2 != 0:
            raise ValueError(f"points_per_axis must be even and >= 4, got {n}")
        if self.period_scale <= 0:
            raise ValueError("period_scale must be positive")
        if self.fiber_dim < 1:
            raise ValueError("fiber_dim must be positive")

    @property
    def n_points(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def state_dim(self) -> int:
        return self.n_points * self.fiber_dim

    @property
    def period(self) -> float:
        return 2.0 * np.pi * self.period_scale

    @property
    def spacing(self) -> float:
        return self.period / self.points_per_axis

    @property
    def quadrature_weight(self) -> float:
        # makes the weighted l2-norm of section values agree with the L2 norm
        return self.spacing ** (self.dim / 2.0)

    @cached_property
    def axis_coords(self) -> np.ndarray:
        return np.arange(self.points_per_axis) * self.spacing

    @cached_property
    def points(self) -> np.ndarray:
        """Grid point coordinates, shape (n_points, dim), C-order flattening."""
        axes = [self.axis_coords] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def axis_modes(self) -> np.ndarray:
        """Integer frequency indices per axis in FFT order (Nyquist = -N/2)."""
        n = self.points_per_axis
        return np.rint(np.fft.fftfreq(n) * n).astype(int)

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Frequency lattice points m/L, shape (n_points, dim), FFT order."""
        xi_axis = self.axis_modes / self.period_scale
        mesh = np.meshgrid(*([xi_axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def frequency_magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.frequencies, axis=-1)

    def sobolev_weights(self, s: float) -> np.ndarray:
        """(1 + |xi|^2)^(s/2) on the flattened frequency lattice."""
        return (1.0 + self.frequency_magnitude ** 2) ** (s / 2.0)

    def grid_shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    def wrap_delta(self, delta: np.ndarray) -> np.ndarray:
        """Reduce coordinate differences to the fundamental domain [-T/2, T/2)."""
        period = self.period
        return (np.asarray(delta) + period / 2.0) % period - period / 2.0

    def torus_distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Geodesic distance between coordinate arrays (..., dim)."""
        d = self.wrap_delta(np.asarray(a) - np.asarray(b))
        return np.linalg.norm(np.atleast_2d(d), axis=-1) if d.ndim > 1 else np.abs(d)

    def pairwise_distance(self) -> np.ndarray:
        """(n_points, n_points) geodesic distance matrix."""
        pts = self.points
        d = self.wrap_delta(pts[:, None, :] - pts[None, :, :])
        return np.sqrt((d ** 2).sum(axis=-1))

    def compatible(self, other: "GridSpec") -> bool:
        return self == other


def _check_finite(values, what="values"):
    if not np.all(np.isfinite(values)):
        raise ValueError(f"non-finite entries in {what}")


@dataclass(frozen=True)
class Section:
    """A sampled section of the rank-r bundle: values of shape (n_points, r)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape != (self.grid.n_points, self.grid.fiber_dim):
            raise ValueError(
                f"section shape {v.shape} does not match grid "
                f"({self.grid.n_points}, {self.grid.fiber_dim})"
            )
        _check_finite(v, "section values")
        object.__setattr__(self, "values", v)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def l2_norm(self) -> float:
        return self.grid.quadrature_weight * float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class FrequencySection:
    """Fourier coefficients of a section, in FFT order, shape (n_points, r)."""

    grid: GridSpec
    coefficients: np.ndarray


def fourier(u: Section) -> FrequencySection:
    """Unitary Fourier transform of a section."""
    g = u.grid
    shaped = u.values.reshape(g.grid_shape() + (g.fiber_dim,))
    hat = np.fft.fftn(shaped, axes=tuple(range(g.dim)), norm="ortho")
    return FrequencySection(g, hat.reshape(g.n_points, g.fiber_dim))


def inverse_fourier(uhat: FrequencySection) -> Section:
    g = uhat.grid
    shaped = uhat.coefficients.reshape(g.grid_shape() + (g.fiber_dim,))
    vals = np.fft.ifftn(shaped, axes=tuple(range(g.dim)), norm="ortho")
    return Section(g, vals.reshape(g.n_points, g.fiber_dim))


def sobolev_norm(u: Section, s: float) -> float:
    """Spectral Sobolev norm (sum over xi of (1+|xi|^2)^s |u_hat|^2)^(1/2).

    For s = 0 this is exactly the weighted l2-norm of the values.
    """
    if s == 0:
        return u.l2_norm()
    hat = fourier(u).coefficients
    w = u.grid.sobolev_weights(s)
    return u.grid.quadrature_weight * float(np.linalg.norm(hat * w[:, None]))


@dataclass(frozen=True)
class Region:
    """A subset of grid points given by a boolean mask."""

    grid: GridSpec
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool).ravel()
        if m.shape != (self.grid.n_points,):
            raise ValueError("mask size does not match grid")
        object.__setattr__(self, "mask", m)

    def is_empty(self) -> bool:
        return not self.mask.any()

    def complement(self) -> "Region":
        return Region(self.grid, ~self.mask)

    def distance_field(self) -> np.ndarray:
        """Geodesic distance from every grid point to the region (0 inside)."""
        if self.is_empty():
            return np.full(self.grid.n_points, np.inf)
        pts = self.grid.points
        inside = pts[self.mask]
        d = self.grid.wrap_delta(pts[:, None, :] - inside[None, :, :])
        return np.sqrt((d ** 2).sum(axis=-1)).min(axis=1)

    def ball(self, radius: float) -> "Region":
        """B_R(region) in the torus geodesic metric; B_0 is the region itself."""
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        if radius == 0 or self.is_empty():
            return self
        return Region(self.grid, self.distance_field() <= radius)

    def diameter(self) -> float:
        if self.is_empty():
            return 0.0
        pts = self.grid.points[self.mask]
        d = self.grid.wrap_delta(pts[:, None, :] - pts[None, :, :])
        return float(np.sqrt((d ** 2).sum(axis=-1)).max())


def ball_region(grid: GridSpec, center, radius: float) -> Region:
    """Geodesic ball {x : d(x, center) <= radius} as a Region."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    d = grid.wrap_delta(grid.points - center[None, :])
    return Region(grid, np.sqrt((d ** 2).sum(axis=-1)) <= radius)


@dataclass(frozen=True)
class BumpFunction:
    """Real scalar grid function with declared Lipschitz/support certificates."""

    grid: GridSpec
    values: np.ndarray
    lipschitz_bound: float
    support_diam: float
    sup_norm: float = 1.0
    derivative_bounds: tuple = field(default_factory=tuple)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.shape != (self.grid.n_points,):
            raise ValueError("bump values size does not match grid")
        _check_finite(v, "bump values")
        object.__setattr__(self, "values", v)

    def support(self) -> Region:
        return Region(self.grid, self.values != 0.0)

    def measured_lipschitz(self) -> float:
        """Largest slope over nearest-neighbour grid pairs."""
        g = self.grid
        v = self.values.reshape(g.grid_shape())
        h = g.spacing
        worst = 0.0
        for axis in range(g.dim):
            worst = max(worst, float(np.abs(np.roll(v, -1, axis) - v).max()) / h)
        return worst

    def measured_derivative_sup(self, order: int) -> float:
        """Sup-norm of the order-th spectral derivative (max over axes)."""
        g = self.grid
        v = self.values.reshape(g.grid_shape())
        xi_axis = g.axis_modes / g.period_scale
        worst = 0.0
        for axis in range(g.dim):
            hat = np.fft.fft(v, axis=axis)
            shape = [1] * g.dim
            shape[axis] = g.points_per_axis
            mult = (1j * xi_axis.reshape(shape)) ** order
            dv = np.fft.ifft(hat * mult, axis=axis)
            worst = max(worst, float(np.abs(dv).max()))
        return worst

    def translated(self, shift_indices) -> "BumpFunction":
        """Exact array rotation by integer grid offsets per axis."""
        g = self.grid
        shift = np.atleast_1d(np.asarray(shift_indices, dtype=int))
        v = self.values.reshape(g.grid_shape())
        for axis, k in enumerate(shift):
            v = np.roll(v, k, axis=axis)
        return replace(self, values=v.ravel())


def lipschitz_bump(grid: GridSpec, center, R: float, L: float) -> BumpFunction:
    """An element of L-Lip_R: plateau bump, L-Lipschitz, support diameter <= R.

    Profile: clip(L * (R/2 - d(x, center)), 0, 1).
    """
    if R < 4 * grid.spacing:
        raise ValueError("under-resolved bump: R must be >= 4 grid spacings")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    d = grid.wrap_delta(grid.points - center[None, :])
    dist = np.sqrt((d ** 2).sum(axis=-1))
    vals = np.clip(L * (R / 2.0 - dist), 0.0, 1.0)
    return BumpFunction(grid, vals, lipschitz_bound=L, support_diam=R)


def cutoff_eta(region: Region, R: float) -> BumpFunction:
    """Smooth cutoff: 1 on the region, 0 outside B_R(region).

    The transition runs over geodesic distance [0, R] with a C^2 smoothstep,
    so the measured j-th derivative sup-norms scale like C_j / R.
    """
    g = region.grid
    if R < 4 * g.spacing:
        raise ValueError("under-resolved cutoff: R must be >= 4 grid spacings")
    if region.is_empty():
        vals = np.zeros(g.n_points)
    elif (~region.mask).sum() == 0:
        vals = np.ones(g.n_points)
    else:
        vals = smoothstep(region.distance_field() / R)
    # derivative bound certificates measured after construction
    bump = BumpFunction(
        g, vals, lipschitz_bound=1.875 / R, support_diam=np.inf, sup_norm=1.0
    )
    bounds = tuple(bump.measured_derivative_sup(j) for j in (1, 2))
    return replace(bump, derivative_bounds=bounds)


def restricted_seminorm(
    u: Section, s: float, region: Region, cutoff_width: float
) -> float:
    """Smooth-cutoff surrogate of the restricted Sobolev seminorm ||u||_{H^s, region}.

    Multiplies u by a cutoff that is 1 on the region and 0 outside
    B_cutoff_width(region), then takes the full Sobolev norm.  Empty
    regions give 0 by convention.
    """
    if region.is_empty():
        return 0.0
    g = u.grid
    if (~region.mask).sum() == 0:
        return sobolev_norm(u, s)
    eta = cutoff_eta(region, cutoff_width)
    return sobolev_norm(Section(g, u.values * eta.values[:, None]), s)


def translate_section(u: Section, shift_indices) -> Section:
    g = u.grid
    shift = np.atleast_1d(np.asarray(shift_indices, dtype=int))
    v = u.values.reshape(g.grid_shape() + (g.fiber_dim,))
    for axis, k in enumerate(shift):
        v = np.roll(v, k, axis=axis)
    return Section(g, v.reshape(g.n_points, g.fiber_dim))
