import numpy as np
import pytest

from adaptive_em.problems import get_example
from adaptive_em.transform1d import (
    DegenerateDiffusionError,
    PiecewiseDrift1D,
    RootFindError,
    Transform1D,
    TransformParams,
    alpha,
    bump,
)

EX1 = get_example("example1")
EX2 = get_example("example2")


def _unit_sigma(x):
    return np.ones_like(np.asarray(x, dtype=float))


def test_piecewise_drift_right_continuous_values():
    mu = EX1.piecewise_drift
    assert mu(-0.5) == -2.0
    assert mu(0.0) == 0.0  # square branch owns the breakpoint
    assert mu(0.5) == 0.25
    assert mu(1.0) == -1.0  # 2/x - 3/x^2 branch owns the breakpoint
    assert mu(2.0) == pytest.approx(0.25)
    mu2 = EX2.piecewise_drift
    assert mu2(-1.5) == -1.0
    assert mu2(-1.0) == 1.0
    assert mu2(2.0) == -4.0


def test_piecewise_drift_vectorized_matches_scalar():
    mu = EX1.piecewise_drift
    xs = np.array([-1.0, -0.5, 0.0, 0.3, 0.999, 1.0, 1.7])
    np.testing.assert_array_equal(mu(xs), [float(mu(x)) for x in xs])


def test_piecewise_drift_validation():
    with pytest.raises(ValueError):
        PiecewiseDrift1D(breakpoints=(1.0, 0.0), branches=(abs, abs, abs))
    with pytest.raises(ValueError):
        PiecewiseDrift1D(breakpoints=(0.0,), branches=(abs,))
    # declared limit contradicts the branch next to the breakpoint
    with pytest.raises(ValueError):
        PiecewiseDrift1D(
            breakpoints=(0.0,),
            branches=(lambda x: x, lambda x: x),
            left_limits=(5.0,),
            right_limits=(0.0,),
        )


def test_piecewise_drift_without_breakpoints():
    mu = PiecewiseDrift1D(breakpoints=(), branches=(np.sin,))
    assert mu(0.3) == np.sin(0.3)


def test_alpha_examples():
    assert alpha(EX1.piecewise_drift, EX1.scalar_sigma, 0.0) == pytest.approx(-1.0)
    assert alpha(EX1.piecewise_drift, EX1.scalar_sigma, 1.0) == pytest.approx(16.0 / 9.0)
    assert alpha(EX2.piecewise_drift, EX2.scalar_sigma, -1.0) == pytest.approx(-1.0)
    assert alpha(EX2.piecewise_drift, EX2.scalar_sigma, 2.0) == pytest.approx(2.5)


def test_alpha_zero_for_continuous_drift():
    mu = PiecewiseDrift1D(breakpoints=(0.0,), branches=(lambda x: x, lambda x: x))
    assert alpha(mu, _unit_sigma, 0.0) == 0.0


def test_alpha_rejects_non_breakpoint_and_zero_diffusion():
    with pytest.raises(ValueError):
        alpha(EX1.piecewise_drift, EX1.scalar_sigma, 0.25)
    with pytest.raises(DegenerateDiffusionError):
        alpha(EX1.piecewise_drift, lambda x: 0.0, 0.0)


def test_bump_values():
    assert bump(0.0) == 1.0
    assert bump(0.5) == 0.31640625
    assert bump(1.0) == 0.0
    assert bump(-1.0) == 0.0
    assert bump(1.5) == 0.0
    u = np.linspace(-2.0, 2.0, 101)
    np.testing.assert_array_equal(bump(u), bump(-u))
    # quartic contact at the support edge
    assert bump(1.0 - 1e-3) < 2e-11


def test_transform_default_radius_and_fixed_points():
    tr = EX1.transform()
    assert 0.0 < tr.params.c <= 0.2
    for xi in (0.0, 1.0):
        assert tr.value(xi) == xi
        assert tr.derivative(xi) == 1.0
    # identity away from every bump interval
    far = np.array([-1.5, 0.5, 2.5])
    np.testing.assert_array_equal(tr.value(far), far)
    np.testing.assert_array_equal(tr.inverse(far), far)
    np.testing.assert_array_equal(tr.derivative(far), np.ones(3))
    np.testing.assert_array_equal(tr.second_derivative(far), np.zeros(3))


def test_transform_monotone_with_positive_slope():
    for entry in (EX1, EX2):
        tr = entry.transform()
        z = np.linspace(-3.0, 4.0, 20001)
        vals = tr.value(z)
        assert np.all(np.diff(vals) > 0.0)
        assert tr.derivative(z).min() >= 0.1


def test_transform_roundtrip():
    rng = np.random.default_rng(4)
    for entry in (EX1, EX2):
        tr = entry.transform()
        x = rng.uniform(-2.5, 3.5, 10_000)
        z = tr.value(x)
        np.testing.assert_allclose(tr.inverse(z), x, atol=1e-10)
    tr = EX1.transform()
    assert float(tr.inverse(tr.value(0.05))) == pytest.approx(0.05, abs=1e-10)


def test_transform_derivatives_match_finite_differences():
    tr = EX1.transform()
    h = 1e-6
    # stay away from breakpoints and bump edges, where branches switch
    edges = [b + s * tr.params.c for b in (0.0, 1.0) for s in (-1.0, 0.0, 1.0)]
    x = np.linspace(-0.6, 1.6, 1501)
    keep = np.ones(x.shape, dtype=bool)
    for e in edges:
        keep &= np.abs(x - e) > 1e-3
    x = x[keep]
    d1 = (tr.value(x + h) - tr.value(x - h)) / (2.0 * h)
    np.testing.assert_allclose(tr.derivative(x), d1, atol=1e-5)
    d2 = (tr.derivative(x + h) - tr.derivative(x - h)) / (2.0 * h)
    np.testing.assert_allclose(tr.second_derivative(x), d2, atol=1e-4)


def test_transformed_drift_is_continuous_at_breakpoints():
    h = 1e-6
    for entry in (EX1, EX2):
        tr = entry.transform()
        for xi in entry.piecewise_drift.breakpoints:
            mu_l, sg_l = tr.transformed_coeffs(xi - h)
            mu_r, sg_r = tr.transformed_coeffs(xi + h)
            assert float(mu_l) == pytest.approx(float(mu_r), abs=1e-4)
            assert float(sg_l) == pytest.approx(float(sg_r), abs=1e-4)


def test_transformed_coeffs_have_bounded_slopes():
    z = np.linspace(-2.5, 3.5, 120_001)
    for entry in (EX1, EX2):
        tr = entry.transform()
        mu, sg = tr.transformed_coeffs(z)
        assert np.all(np.isfinite(mu)) and np.all(np.isfinite(sg))
        assert np.abs(np.diff(mu) / np.diff(z)).max() < 150.0
        assert np.abs(np.diff(sg) / np.diff(z)).max() < 20.0


def test_transformed_drift_value_at_zero():
    # at 0+ the original drift vanishes, so only the Ito term is left:
    # 0.5 * sigma(0)^2 * alpha * psi''(0+) = 0.5 * 1 * (-1) * 2 = -1
    tr = EX1.transform()
    mu, sg = tr.transformed_coeffs(0.0)
    assert float(mu) == pytest.approx(-1.0)
    assert float(sg) == pytest.approx(1.0)


def test_explicit_params_validation():
    with pytest.raises(ValueError):
        TransformParams(c=0.0)
    with pytest.raises(ValueError):
        EX1.transform().__class__(
            EX1.piecewise_drift, EX1.scalar_sigma, eps0=0.4,
            params=TransformParams(c=0.4),
        )
    wide = PiecewiseDrift1D(
        breakpoints=(0.0, 0.4),
        branches=(lambda x: 0.0 * x, lambda x: 1.0 + 0.0 * x, lambda x: 0.0 * x),
    )
    with pytest.raises(ValueError, match="gap"):
        Transform1D(wide, _unit_sigma, eps0=5.0, params=TransformParams(c=0.3))
    steep = PiecewiseDrift1D(
        breakpoints=(0.0,),
        branches=(lambda x: 100.0 + 0.0 * x, lambda x: 0.0 * x),
    )
    with pytest.raises(ValueError, match="0.1"):
        Transform1D(steep, _unit_sigma, eps0=1.0, params=TransformParams(c=0.2))


def test_auto_radius_shrinks_until_slope_floor_holds():
    steep = PiecewiseDrift1D(
        breakpoints=(0.0,),
        branches=(lambda x: 100.0 + 0.0 * x, lambda x: 0.0 * x),
    )
    tr = Transform1D(steep, _unit_sigma, eps0=1.0)
    assert tr.params.c < 0.5
    z = np.linspace(-1.0, 1.0, 4001)
    assert tr.derivative(z).min() >= 0.1
    np.testing.assert_allclose(tr.inverse(tr.value(z)), z, atol=1e-10)


def test_degenerate_diffusion_rejected_at_construction():
    mu = PiecewiseDrift1D(
        breakpoints=(0.0,), branches=(lambda x: 1.0 + 0.0 * x, lambda x: 0.0 * x)
    )
    with pytest.raises(DegenerateDiffusionError):
        Transform1D(mu, lambda x: 0.0 * np.asarray(x), eps0=1.0)


def test_inverse_iteration_cap():
    tr = EX1.transform()
    with pytest.raises(RootFindError):
        tr.inverse(0.1, max_iter=1)


def test_identity_transform_without_breakpoints():
    mu = PiecewiseDrift1D(breakpoints=(), branches=(np.cos,))
    tr = Transform1D(mu, _unit_sigma, eps0=1.0)
    z = np.linspace(-2.0, 2.0, 101)
    np.testing.assert_array_equal(tr.value(z), z)
    np.testing.assert_array_equal(tr.inverse(z), z)
    mu_g, sg_g = tr.transformed_coeffs(z)
    np.testing.assert_allclose(mu_g, np.cos(z))
    np.testing.assert_allclose(sg_g, np.ones_like(z))
