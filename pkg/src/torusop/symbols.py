"""Matrix-valued symbols p(x, xi) of declared order and their calculus.

Samples live on the product of the spatial grid and the frequency lattice.
Derivatives use the convention D = -i * d/d(.) in both x and xi; x-derivatives
are spectral (the symbol is periodic in x), xi-derivatives are centered lattice
differences with second-order one-sided stencils at the lattice edges.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import GridSpec, smoothstep

__all__ = [
    "Symbol",
    "SymbolEstimateReport",
    "EllipticityCertificate",
    "symbol_from_callable",
    "estimate_constants",
    "check_elliptic",
    "compose_symbols",
    "invert_principal",
    "named_symbol",
    "NAMED_SYMBOLS",
]

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class Symbol:
    """Sampled symbol of declared order.

    samples has shape (n_x, n_xi, r, r) where n_x is either the full number of
    grid points or 1 for x-independent symbols.  The xi axis runs over the
    flattened frequency lattice in FFT order; the Nyquist entries are stored
    already symmetrized over the +-N/2 aliases.
    """

    grid: GridSpec
    order: int
    samples: np.ndarray
    hermitian_valued: bool = False
    x_independent: bool = False

    def __post_init__(self):
        g = self.grid
        a = np.asarray(self.samples, dtype=complex)
        r = g.fiber_dim
        if a.ndim == 2:
            a = a[:, :, None, None]
        n_x = 1 if self.x_independent else g.n_points
        if a.shape != (n_x, g.n_points, r, r):
            raise ValueError(
                f"symbol samples shape {a.shape}, expected {(n_x, g.n_points, r, r)}"
            )
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite symbol samples")
        if self.hermitian_valued:
            defect = np.abs(a - np.conj(np.swapaxes(a, -1, -2))).max()
            scale = max(np.abs(a).max(), 1.0)
            if defect > HERMITIAN_TOL * scale:
                raise ValueError(
                    f"symbol flagged hermitian_valued but defect {defect:.3e}"
                )
        object.__setattr__(self, "samples", a)

    def at_full_x(self) -> np.ndarray:
        """Samples broadcast to the full (n_points, n_xi, r, r) shape."""
        if self.x_independent:
            return np.broadcast_to(
                self.samples,
                (self.grid.n_points,) + self.samples.shape[1:],
            )
        return self.samples


def symbol_from_callable(
    grid: GridSpec,
    order: int,
    fn,
    hermitian_valued: bool = False,
    x_independent: bool = False,
) -> Symbol:
    """Sample a vectorized symbol function on the grid.

    ``fn(x, xi)`` receives broadcastable coordinate arrays of shape
    (n_x, 1, dim) and (1, n_xi, dim) and must return an array broadcastable
    to (n_x, n_xi) for scalar symbols or (n_x, n_xi, r, r) for matrix ones.

    Nyquist frequency entries are symmetrized over the two aliases
    m = +-N/2 per axis (evaluate on every sign choice and average), which
    keeps real symbols quantizing to Hermitian-symmetrizable operators.
    """
    g = grid
    r = g.fiber_dim
    xs = (np.zeros((1, g.dim)) if x_independent else g.points)[:, None, :]
    xi_base = g.frequencies
    nyq_val = (g.points_per_axis // 2) / g.period_scale
    nyq_axes = [
        ax for ax in range(g.dim)
        if np.any(np.isclose(np.abs(xi_base[:, ax]), nyq_val))
    ]
    n_x = xs.shape[0]
    target = (n_x, g.n_points, r, r)

    def eval_on(xi_lattice):
        out = np.asarray(fn(xs, xi_lattice[None, :, :]), dtype=complex)
        if r == 1 and out.ndim == 2:
            out = out[:, :, None, None]
        return np.broadcast_to(out, target)

    acc = np.zeros(target, dtype=complex)
    combos = list(itertools.product((1.0, -1.0), repeat=len(nyq_axes)))
    for signs in combos:
        xi = xi_base.copy()
        for sgn, ax in zip(signs, nyq_axes):
            at_nyq = np.isclose(np.abs(xi[:, ax]), nyq_val)
            xi[at_nyq, ax] = sgn * nyq_val
        acc = acc + eval_on(xi)
    samples = acc / len(combos)
    return Symbol(
        grid, order, samples,
        hermitian_valued=hermitian_valued, x_independent=x_independent,
    )


def _x_partial(sym: Symbol, alpha: tuple) -> np.ndarray:
    """Spectral partial derivative d^alpha/dx^alpha of the samples."""
    g = sym.grid
    if sum(alpha) == 0:
        return sym.samples
    if sym.x_independent:
        return np.zeros_like(sym.samples)
    a = sym.samples.reshape(g.grid_shape() + sym.samples.shape[1:])
    xi_axis = g.axis_modes / g.period_scale
    for ax, order in enumerate(alpha):
        if order == 0:
            continue
        hat = np.fft.fft(a, axis=ax)
        shape = [1] * a.ndim
        shape[ax] = g.points_per_axis
        hat = hat * (1j * xi_axis.reshape(shape)) ** order
        a = np.fft.ifft(hat, axis=ax)
    return a.reshape(sym.samples.shape)


def _xi_partial(samples: np.ndarray, grid: GridSpec, beta: tuple) -> np.ndarray:
    """Centered-difference partial derivative in xi (one-sided at edges).

    On even grids the half-mode slot holds the symmetrized sample, which
    for symbols with an odd-in-xi part is not a smooth continuation of its
    neighbours.  The difference stencil therefore runs over the sorted
    interior modes only, and the half-mode slot receives the symmetric
    average of the two one-sided edge values.
    """
    if sum(beta) == 0:
        return samples
    g = grid
    n_x = samples.shape[0]
    a = samples.reshape((n_x,) + g.grid_shape() + samples.shape[2:])
    dxi = 1.0 / g.period_scale
    even = g.points_per_axis % 2 == 0
    for ax, order in enumerate(beta):
        axis = 1 + ax
        for _ in range(order):
            a = np.fft.fftshift(a, axes=axis)
            if even:
                # Sorted layout puts the half mode at index 0.
                interior = np.take(a, range(1, g.points_per_axis), axis=axis)
                d_int = np.gradient(interior, dxi, axis=axis, edge_order=2)
                lo = np.take(d_int, [0], axis=axis)
                hi = np.take(d_int, [d_int.shape[axis] - 1], axis=axis)
                a = np.concatenate([0.5 * (lo + hi), d_int], axis=axis)
            else:
                a = np.gradient(a, dxi, axis=axis, edge_order=2)
            a = np.fft.ifftshift(a, axes=axis)
    return a.reshape(samples.shape)


def _multi_indices(dim: int, max_total: int):
    for total in range(max_total + 1):
        if dim == 1:
            yield (total,)
        else:
            for a0 in range(total + 1):
                yield (a0, total - a0)


def _block_norms(samples: np.ndarray) -> np.ndarray:
    """Spectral norm of each (r, r) block."""
    if samples.shape[-1] == 1:
        return np.abs(samples[..., 0, 0])
    return np.linalg.norm(samples, ord=2, axis=(-2, -1))


@dataclass(frozen=True)
class SymbolEstimateReport:
    """Measured uniformity constants C^{alpha beta} for a symbol."""

    alpha_max: int
    beta_max: int
    order_used: int
    constants: dict = field(default_factory=dict)

    def max_constant(self, alpha_total=None, beta_total=None) -> float:
        vals = [
            c
            for (a, b), c in self.constants.items()
            if (alpha_total is None or sum(a) <= alpha_total)
            and (beta_total is None or sum(b) <= beta_total)
        ]
        return max(vals) if vals else 0.0


def estimate_constants(
    p: Symbol, alpha_max: int, beta_max: int
) -> SymbolEstimateReport:
    """Measure C^{ab} = max_(x,xi) ||D_x^a D_xi^b p|| / (1+|xi|)^(k-|b|)."""
    g = p.grid
    if beta_max >= g.points_per_axis // 2:
        raise ValueError("beta_max exceeds the frequency lattice extent")
    if alpha_max >= g.points_per_axis // 2:
        raise ValueError("alpha_max exceeds spectral resolution")
    absxi = g.frequency_magnitude
    constants = {}
    for alpha in _multi_indices(g.dim, alpha_max):
        da = _x_partial(p, alpha)
        for beta in _multi_indices(g.dim, beta_max):
            dab = _xi_partial(da, g, beta)
            norms = _block_norms(dab)
            weight = (1.0 + absxi) ** (p.order - sum(beta))
            constants[(alpha, beta)] = float((norms / weight[None, :]).max())
    return SymbolEstimateReport(
        alpha_max=alpha_max, beta_max=beta_max,
        order_used=p.order, constants=constants,
    )


@dataclass(frozen=True)
class EllipticityCertificate:
    """Invertibility of p(x, xi) for |xi| > radius with an order -k bound."""

    ok: bool
    radius: float = np.inf
    inverse_bound: float = np.inf
    worst_point: tuple = ()


def check_elliptic(
    p: Symbol, eps_guard: float = 1e-12, max_candidates: int = 24
) -> EllipticityCertificate:
    """Find the smallest lattice radius R past which the symbol is invertible."""
    g = p.grid
    a = p.samples
    sv_max = _block_norms(a)
    if a.shape[-1] == 1:
        sv_min = np.abs(a[..., 0, 0])
    else:
        sv_min = np.linalg.svd(a, compute_uv=False)[..., -1]
    absxi = g.frequency_magnitude
    invertible = sv_min > eps_guard * np.maximum(sv_max, 1.0)
    bad = ~invertible.all(axis=0)  # per xi point: any x fails

    uniq = np.unique(absxi)
    if len(uniq) > max_candidates:
        idx = np.linspace(0, len(uniq) - 1, max_candidates).astype(int)
        uniq = uniq[idx]
    candidates = np.concatenate([[0.0], uniq])
    for radius in np.unique(candidates):
        outside = absxi > radius
        if not outside.any():
            continue
        if bad[outside].any():
            continue
        with np.errstate(divide="ignore"):
            inv_norm = 1.0 / sv_min[:, outside]
        bound = float((inv_norm * (1.0 + absxi[outside]) ** p.order).max())
        return EllipticityCertificate(ok=True, radius=float(radius),
                                      inverse_bound=bound)
    flat = sv_min.min(axis=0)
    j = int(np.argmax(absxi * bad)) if bad.any() else int(np.argmin(flat))
    i = int(np.argmin(sv_min[:, j]))
    return EllipticityCertificate(
        ok=False, worst_point=(i, j, float(absxi[j]), float(flat[j]))
    )


def compose_symbols(p: Symbol, q: Symbol, J: int) -> Symbol:
    """Truncated composition sum_(|a|<=J) i^|a|/a! (D_xi^a p)(D_x^a q).

    Declared order is order(p) + order(q).
    """
    g = p.grid
    if not g.compatible(q.grid):
        raise ValueError("incompatible grids")
    if J < 0:
        raise ValueError("J must be >= 0")
    if J >= g.points_per_axis // 2:
        raise ValueError("J exceeds resolvable lattice differences")
    total = None
    for alpha in _multi_indices(g.dim, J):
        n = sum(alpha)
        fact = math.prod(math.factorial(ai) for ai in alpha)
        # D_xi^a p = (-i d/dxi)^a p ; D_x^a q = (-i d/dx)^a q
        dxi_p = (-1j) ** n * _xi_partial(p.samples, g, alpha)
        dx_q = (-1j) ** n * _x_partial(q, alpha)
        term = (1j ** n / fact) * np.matmul(dxi_p, dx_q)
        total = term if total is None else total + term
    x_indep = p.x_independent and q.x_independent
    return Symbol(g, p.order + q.order, total, x_independent=x_indep)


def invert_principal(
    p: Symbol, cert: EllipticityCertificate, excision_width: float
) -> Symbol:
    """Excised pointwise inverse chi_ex(|xi|) p(x, xi)^{-1}, declared order -k."""
    if not cert.ok:
        raise ValueError("cannot invert a symbol without an ellipticity certificate")
    if excision_width <= 0:
        raise ValueError("excision_width must be positive")
    g = p.grid
    absxi = g.frequency_magnitude
    chi = 1.0 - smoothstep((absxi - cert.radius) / excision_width)
    a = p.samples
    out = np.zeros_like(a)
    active = chi > 0
    if a.shape[-1] == 1:
        out[:, active, 0, 0] = chi[active] / a[:, active, 0, 0]
    else:
        out[:, active] = chi[active, None, None] * np.linalg.inv(a[:, active])
    return Symbol(g, -p.order, out, x_independent=p.x_independent)


# ---------------------------------------------------------------------------
# named symbol families (closed forms used by tests and the CLI)

_SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SIGMA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)


def _xi_sq(xi):
    return (xi ** 2).sum(axis=-1)


NAMED_SYMBOLS = {
    # name: (fn builder, order, hermitian, x_independent)
    "laplace+1": lambda prm: (
        lambda x, xi: 1.0 + _xi_sq(xi), 2, True, True),
    "sqrt_laplace": lambda prm: (
        lambda x, xi: np.sqrt(1.0 + _xi_sq(xi)), 1, True, True),
    "momentum": lambda prm: (
        lambda x, xi: xi[..., 0] + 0.0 * x[..., 0], 1, True, True),
    "elliptic_x": lambda prm: (
        lambda x, xi: (prm.get("a", 2.0) + np.cos(x[..., 0])) + _xi_sq(xi),
        2, True, False),
    "drift": lambda prm: (
        lambda x, xi: (prm.get("a", 2.0) + np.cos(x[..., 0])) * xi[..., 0],
        1, True, False),
    "magnetic": lambda prm: (
        lambda x, xi: (xi[..., 0] - prm.get("b", 1.0) * np.sin(x[..., 0])) ** 2
        + 1.0,
        2, True, False),
    "mult_cos": lambda prm: (
        lambda x, xi: (prm.get("a", 2.0) + np.cos(x[..., 0])) + 0.0 * xi[..., 0],
        0, True, False),
    "schwartz_xi": lambda prm: (
        lambda x, xi: np.exp(-_xi_sq(xi)), 0, True, True),
    "schwartz_drift": lambda prm: (
        lambda x, xi: (prm.get("a", 2.0) + np.cos(x[..., 0]))
        * np.exp(-_xi_sq(xi)),
        0, True, False),
    "order_minus1": lambda prm: (
        lambda x, xi: (1.0 + _xi_sq(xi)) ** -0.5, -1, True, True),
    "xi1_squared": lambda prm: (
        lambda x, xi: xi[..., 0] ** 2, 2, True, True),
    "dirac": lambda prm: (
        lambda x, xi: xi[..., 0, None, None] * _SIGMA1, 1, True, True),
    "dirac_mass": lambda prm: (
        lambda x, xi: xi[..., 0, None, None] * _SIGMA1
        + prm.get("m", 1.0) * _SIGMA2,
        1, True, True),
}


def named_symbol(grid: GridSpec, name: str, params: dict | None = None) -> Symbol:
    """Construct one of the closed-form symbol families by name."""
    if name not in NAMED_SYMBOLS:
        raise KeyError(f"unknown symbol family {name!r}")
    fn, order, hermitian, x_indep = NAMED_SYMBOLS[name](params or {})
    return symbol_from_callable(
        grid, order, fn, hermitian_valued=hermitian, x_independent=x_indep
    )
