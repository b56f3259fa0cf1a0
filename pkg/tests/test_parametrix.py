import numpy as np
import pytest

from torusop.lattice import GridSpec, Section
from torusop.operators import apply_operator, fourier_multiplier, quantize
from torusop.parametrix import (
    band_projector,
    build_parametrix,
    elliptic_estimate_constant,
    elliptic_regularity_check,
    fourier_diagonal_constant,
    modified_inner_product,
)
from torusop.symbols import named_symbol


def test_band_projector_partition():
    g = GridSpec(1, 64, 1.0)
    lo = band_projector(g, 5.0)
    hi = band_projector(g, 5.0, off_band=True)
    assert np.abs(lo.matrix + hi.matrix - np.eye(g.state_dim)).max() <= 1e-12


def test_parametrix_residuals_shrink_with_sweeps():
    g = GridSpec(1, 128, 2.0)
    p = named_symbol(g, "elliptic_x")
    P = quantize(p)
    prev = None
    for J in (0, 1, 2):
        res = build_parametrix(P, p, J, excision_width=4.0)
        assert not res.diverged
        cur = res.off_band_norms[(0.0, 0.0)]
        if prev is not None:
            assert cur <= prev * 1.05
        prev = cur


def test_parametrix_two_sided():
    g = GridSpec(1, 128, 2.0)
    p = named_symbol(g, "elliptic_x")
    res = build_parametrix(quantize(p), p, 1, excision_width=4.0)
    n1 = res.residual_norms[("S1", 0, 0)]
    n2 = res.residual_norms[("S2", 0, 0)]
    assert n1 <= 10 * n2 and n2 <= 10 * n1


def test_exact_inverse_multiplier_case():
    g = GridSpec(1, 128, 2.0)
    p = named_symbol(g, "laplace+1")
    res = build_parametrix(quantize(p), p, 1, excision_width=4.0)
    assert res.off_band_norms[(0.0, 0.0)] <= 1e-10
    # the excised band carries the full identity there
    assert res.band_norms[(0.0, 0.0)] == pytest.approx(1.0, rel=1e-6)


def test_fourier_diagonal_constant_identity():
    assert fourier_diagonal_constant(lambda xi: 0.0 * xi[..., 0], 0, 0.0) \
        == pytest.approx(1.0, rel=1e-9)
    c = fourier_diagonal_constant(lambda xi: 1 + xi[..., 0] ** 2, 2, 2.0)
    assert c == pytest.approx(1.0, abs=1e-9)


def test_elliptic_estimate_finite_for_elliptic():
    g = GridSpec(1, 128, 1.0)
    P = quantize(named_symbol(g, "elliptic_x"))
    c = elliptic_estimate_constant(P, 2.0)
    assert np.isfinite(c)
    assert c <= 2.0


def test_regularity_tails_controlled():
    g = GridSpec(1, 128, 2.0)
    p = named_symbol(g, "elliptic_x")
    P = quantize(p)
    rng = np.random.default_rng(5)
    hat = (rng.standard_normal(g.n_points)
           / (1.0 + g.frequency_magnitude) ** 3)
    u = Section(g, np.fft.ifft(hat * g.n_points ** 0.5)[:, None])
    rep = elliptic_regularity_check(P, p, u, J=2, excision_width=4.0)
    assert rep.identity_defect <= 1e-6
    for _level, tail_u, tail_pu, _ratio in rep.rows:
        assert tail_u <= 10 * (tail_pu + 1e-12)


def test_modified_inner_product_symmetric():
    g = GridSpec(1, 64, 1.0)
    P = quantize(named_symbol(g, "laplace+1"))
    mip = modified_inner_product(P, k=1.0, l=0.0)
    assert mip.max_asymmetry <= 1e-10
    evals = np.linalg.eigvalsh(mip.gram)
    assert evals.min() > 0
