"""Quantization of symbols into dense operators and the operator algebra.

The quantization is exact on the grid: (Pu)(x) = sum_xi e^{i x.xi} p(x, xi)
u_hat(xi), realized column-wise through the unitary DFT matrix.  Operator
norms between Sobolev spaces are computed with diagonal frequency weights.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .lattice import GridSpec, Section
from .symbols import Symbol

__all__ = [
    "DiscreteOperator",
    "quantize",
    "multiplication_operator",
    "fourier_multiplier",
    "identity_operator",
    "op_norm",
    "compose",
    "adjoint",
    "commutator",
    "symmetrize",
    "apply_operator",
    "kernel",
    "decay_profile",
    "DecayProfile",
]

STATE_DIM_CAP = 4608
SELF_ADJOINT_TOL = 1e-10
PROPAGATION_DUST_TOL = 1e-10


@lru_cache(maxsize=4)
def fourier_matrix(grid: GridSpec) -> np.ndarray:
    """Unitary W with W[j, m] = N^{-d/2} exp(i x_j . xi_m); inverse FFT matrix."""
    n = grid.points_per_axis
    j = np.arange(n)
    m = grid.axis_modes
    w_axis = np.exp(2j * np.pi * np.outer(j, m) / n) / np.sqrt(n)
    w = w_axis
    for _ in range(grid.dim - 1):
        w = np.kron(w, w_axis)
    return w


@lru_cache(maxsize=8)
def _distance_mask_beyond(grid: GridSpec, rho: float) -> np.ndarray:
    d = grid.pairwise_distance()
    # tolerate rounding when the bound lands exactly on a lattice distance
    mask = d > rho * (1.0 + 1e-12) + 1e-12 * grid.spacing
    if grid.fiber_dim > 1:
        mask = np.kron(mask, np.ones((grid.fiber_dim,) * 2, dtype=bool))
    return mask


@dataclass(frozen=True)
class DiscreteOperator:
    """Dense operator on sections with declared order and provenance."""

    grid: GridSpec
    order: int
    matrix: np.ndarray
    provenance: str = "quantized"
    self_adjoint: bool = False
    scalar_symbol: bool = False
    hermitian_symbol: bool = False
    propagation_bound: float | None = None
    propagation_speed: float | None = None
    defect: float | None = None

    def __post_init__(self):
        g = self.grid
        a = np.asarray(self.matrix, dtype=complex)
        if a.shape != (g.state_dim, g.state_dim):
            raise ValueError(
                f"matrix shape {a.shape} != state dim {g.state_dim}"
            )
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite operator entries")
        scale = float(np.abs(a).max()) or 1.0
        if self.self_adjoint:
            defect = float(np.abs(a - a.conj().T).max())
            if defect > SELF_ADJOINT_TOL * scale:
                raise ValueError(
                    f"operator flagged self_adjoint but defect {defect:.3e}"
                )
            a = (a + a.conj().T) / 2.0
        if self.propagation_bound is not None:
            beyond = _distance_mask_beyond(g, float(self.propagation_bound))
            dust = float(np.abs(a[beyond]).max()) if beyond.any() else 0.0
            if dust > PROPAGATION_DUST_TOL * scale:
                raise ValueError(
                    f"declared propagation bound violated: entry {dust:.3e} "
                    f"beyond distance {self.propagation_bound}"
                )
            a = np.where(beyond, 0.0, a)
        object.__setattr__(self, "matrix", a)

    @property
    def state_dim(self) -> int:
        return self.grid.state_dim

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def quantize(p: Symbol) -> DiscreteOperator:
    """Kohn-Nirenberg quantization of a sampled symbol, exact on the grid."""
    g = p.grid
    if g.state_dim > STATE_DIM_CAP:
        raise ValueError(
            f"state dimension {g.state_dim} exceeds the dense cap {STATE_DIM_CAP}"
        )
    w = fourier_matrix(g)
    r = g.fiber_dim
    a = p.at_full_x()
    if r == 1:
        mat = (a[:, :, 0, 0] * w) @ w.conj().T
    else:
        t = w[:, :, None, None] * a  # (j, m, a, b)
        t = t.transpose(0, 2, 1, 3).reshape(g.state_dim, g.state_dim)
        mat = t @ np.kron(w.conj().T, np.eye(r))
    scale = float(np.abs(mat).max()) or 1.0
    sa = bool(np.abs(mat - mat.conj().T).max() <= SELF_ADJOINT_TOL * scale)
    return DiscreteOperator(
        g, p.order, mat,
        provenance="quantized",
        self_adjoint=sa,
        scalar_symbol=(r == 1),
        hermitian_symbol=p.hermitian_valued,
    )


def multiplication_operator(grid: GridSpec, values) -> DiscreteOperator:
    """Diagonal multiplication by a scalar grid function (order 0, local)."""
    f = np.asarray(values).ravel()
    if f.shape != (grid.n_points,):
        raise ValueError("multiplier size does not match grid")
    diag = np.repeat(f, grid.fiber_dim).astype(complex)
    return DiscreteOperator(
        grid, 0, np.diag(diag),
        provenance="multiplication",
        self_adjoint=bool(np.all(np.isreal(f))),
        scalar_symbol=True,
        hermitian_symbol=bool(np.all(np.isreal(f))),
        propagation_bound=0.0,
    )


def fourier_multiplier(
    grid: GridSpec, fn, order: int = 0,
    propagation_speed: float | None = None,
) -> DiscreteOperator:
    """Operator diagonal in the frequency basis: u_hat(xi) -> fn(xi) u_hat(xi).

    ``fn`` maps the (n_points, dim) frequency array to per-mode scalars.
    Unlike quantization of a sampled symbol, the multiplier uses the raw
    frequency values including the half mode, so e.g. the first derivative
    has exact lattice translation semantics.
    """
    w = fourier_matrix(grid)
    vals = np.asarray(fn(grid.frequencies), dtype=complex).ravel()
    mat = (w * vals[None, :]) @ w.conj().T
    if grid.fiber_dim > 1:
        mat = np.kron(mat, np.eye(grid.fiber_dim))
    scale = float(np.abs(mat).max()) or 1.0
    sa = bool(np.abs(mat - mat.conj().T).max() <= SELF_ADJOINT_TOL * scale)
    return DiscreteOperator(
        grid, order, mat,
        provenance="quantized", self_adjoint=sa,
        scalar_symbol=True, hermitian_symbol=bool(np.all(np.isreal(vals))),
        propagation_speed=propagation_speed,
    )


def identity_operator(grid: GridSpec) -> DiscreteOperator:
    return DiscreteOperator(
        grid, 0, np.eye(grid.state_dim),
        provenance="multiplication", self_adjoint=True,
        scalar_symbol=True, hermitian_symbol=True, propagation_bound=0.0,
    )


def apply_operator(A: DiscreteOperator, u: Section) -> Section:
    return Section(A.grid, (A.matrix @ u.flat()).reshape(-1, A.grid.fiber_dim))


def _state_weights(grid: GridSpec, s: float) -> np.ndarray:
    return np.repeat(grid.sobolev_weights(s), grid.fiber_dim)


def _to_fourier_rep(A: DiscreteOperator) -> np.ndarray:
    g = A.grid
    w = fourier_matrix(g)
    if g.fiber_dim > 1:
        w = np.kron(w, np.eye(g.fiber_dim))
    return w.conj().T @ A.matrix @ w


def op_norm(
    A: DiscreteOperator,
    s: float,
    t: float,
    tol: float = 1e-6,
    max_iter: int = 5000,
    seed: int = 0,
) -> float:
    """Operator norm of A : H^s -> H^t (norm of W_t A W_s^{-1} on l2).

    Exact singular values for state dimension <= 2000, otherwise power
    iteration on the normal operator with exact-SVD fallback.
    """
    g = A.grid
    ws = _state_weights(g, s)
    wt = _state_weights(g, t)
    if g.state_dim <= 2000:
        b = _to_fourier_rep(A) * (wt[:, None] / ws[None, :])
        return float(np.linalg.norm(b, 2))

    w = fourier_matrix(g)
    if g.fiber_dim > 1:
        w = np.kron(w, np.eye(g.fiber_dim))

    def matvec(v):
        u = w @ (v / ws)
        y = A.matrix @ u
        return (w.conj().T @ y) * wt

    def rmatvec(v):
        u = w @ (v * wt)
        y = A.matrix.conj().T @ u
        return (w.conj().T @ y) / ws

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(g.state_dim) + 1j * rng.standard_normal(g.state_dim)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(max_iter):
        y = rmatvec(matvec(x))
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            return 0.0
        new_sigma = np.sqrt(norm_y)
        x = y / norm_y
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1e-300):
            return float(new_sigma)
        sigma = new_sigma
    # non-convergent power iteration: exact fallback
    b = _to_fourier_rep(A) * (wt[:, None] / ws[None, :])
    return float(np.linalg.norm(b, 2))


def _combine_propagation(a, b):
    if a is None or b is None:
        return None
    return a + b


def compose(A: DiscreteOperator, B: DiscreteOperator) -> DiscreteOperator:
    if A.grid != B.grid:
        raise ValueError("grid mismatch")
    return DiscreteOperator(
        A.grid, A.order + B.order, A.matrix @ B.matrix,
        provenance="composed",
        scalar_symbol=A.scalar_symbol and B.scalar_symbol,
        propagation_bound=_combine_propagation(
            A.propagation_bound, B.propagation_bound),
    )


def adjoint(A: DiscreteOperator) -> DiscreteOperator:
    return DiscreteOperator(
        A.grid, A.order, A.matrix.conj().T,
        provenance="composed",
        self_adjoint=A.self_adjoint,
        scalar_symbol=A.scalar_symbol,
        hermitian_symbol=A.hermitian_symbol,
        propagation_bound=A.propagation_bound,
    )


def commutator(A: DiscreteOperator, B: DiscreteOperator) -> DiscreteOperator:
    """AB - BA; drops one order when both carry the scalar-symbol flag."""
    if A.grid != B.grid:
        raise ValueError("grid mismatch")
    order = A.order + B.order
    if A.scalar_symbol and B.scalar_symbol:
        order -= 1
    return DiscreteOperator(
        A.grid, order, A.matrix @ B.matrix - B.matrix @ A.matrix,
        provenance="composed",
        scalar_symbol=A.scalar_symbol and B.scalar_symbol,
        propagation_bound=_combine_propagation(
            A.propagation_bound, B.propagation_bound),
    )


def symmetrize(A: DiscreteOperator, force: bool = False) -> DiscreteOperator:
    """(A + A*)/2 flagged self-adjoint; the defect ||A - A*|| is recorded.

    Requires the operator to come from a Hermitian-valued symbol (the defect
    is then lower order); pass force=True to override.
    """
    if not (A.hermitian_symbol or force):
        raise ValueError(
            "symmetrize requires hermitian_valued symbol provenance"
        )
    defect = float(np.linalg.norm(A.matrix - A.matrix.conj().T, 2))
    return replace(
        A,
        matrix=(A.matrix + A.matrix.conj().T) / 2.0,
        self_adjoint=True,
        defect=defect,
    )


def kernel(A: DiscreteOperator) -> np.ndarray:
    """The matrix reindexed as blocks k(x, y), shape (n, n, r, r)."""
    g = A.grid
    n, r = g.n_points, g.fiber_dim
    return A.matrix.reshape(n, r, n, r).transpose(0, 2, 1, 3)


@dataclass(frozen=True)
class DecayProfile:
    """Kernel shell maxima plus the smoothing-criterion norm table."""

    shells: tuple  # rows (shell_lo, shell_hi, max_abs)
    norms: dict    # (k, l) -> ||A||_{-k, l}


def decay_profile(
    A: DiscreteOperator, num_shells: int = 12, norm_range: int = 4
) -> DecayProfile:
    """Max |k_A(x, y)| per geodesic distance shell and ||A||_{-k,l} table."""
    g = A.grid
    d = g.pairwise_distance()
    k = kernel(A)
    mags = np.abs(k).max(axis=(2, 3))
    edges = np.linspace(0.0, d.max() * (1 + 1e-12), num_shells + 1)
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (d >= lo) & (d < hi)
        rows.append((float(lo), float(hi),
                     float(mags[sel].max()) if sel.any() else 0.0))
    norms = {
        (kk, ll): op_norm(A, -kk, ll)
        for kk in range(norm_range + 1)
        for ll in range(norm_range + 1)
    }
    return DecayProfile(shells=tuple(rows), norms=norms)
