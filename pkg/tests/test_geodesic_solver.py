import logging

import numpy as np

from pytest                import mark
from pytest                import raises
from hypothesis            import given
from hypothesis            import settings
from hypothesis.strategies import integers
from hypothesis.strategies import sampled_from

from app.core.exceptions          import DimensionMismatch
from app.core.exceptions          import InvalidMetric
from app.core.exceptions          import OutsideDomain
from app.core.exceptions          import ZeroProjection
from app.core.exceptions          import ZeroVector
from app.services                 import lie_core
from app.services                 import linalg
from app.services.classify3d       import build
from app.services.classify3d       import random_params
from app.services.geodesic_solver import SearchConfig
from app.services.geodesic_solver import Verdict
from app.services.geodesic_solver import batched_residual
from app.services.geodesic_solver import canonical
from app.services.geodesic_solver import check_geodesic
from app.services.geodesic_solver import derived_series_case
from app.services.geodesic_solver import douglas_check
from app.services.geodesic_solver import find_geodesic_vectors
from app.services.geodesic_solver import finsler_residual
from app.services.geodesic_solver import kropina_residual
from app.services.geodesic_solver import metric_residual
from app.services.geodesic_solver import naturally_reductive_check
from app.services.geodesic_solver import riemannian_geodesic_transfer
from app.services.geodesic_solver import riemannian_residual
from app.services.geodesic_solver import same_axes
from app.services.geodesic_solver import sphere_samples
from app.services.geodesic_solver import transfer_check
from app.services.lie_core        import derived_algebra_m
from app.services.metric_core     import F_eval
from app.services.metric_core     import InnerProduct
from app.services.metric_core     import alpha_beta
from app.services.metric_core     import kropina
from app.services.metric_core     import randers
from app.services.metric_core     import riemannian
from app.services.phi_expr        import phi_parse

from .testing_utils import PROPER_DERIVED
from .testing_utils import all_close
from .testing_utils import random_admissible
from .testing_utils import random_drift
from .testing_utils import random_group_instance

SEEDS = integers(min_value=0, max_value=2**32 - 1)
SQ17 = np.sqrt(17.0)


def milnor_space(*params):
    return lie_core.lie_group_space(lie_core.nonunimodular(*params))


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def search(samples=2000, seed=0, **kwargs):
    return SearchConfig(samples=samples, seed=seed, **kwargs)


# Riemannian criterion

def test_riemannian_residual_abelian(rng):
    s = lie_core.lie_group_space(lie_core.abelian(4))
    np.testing.assert_array_equal(riemannian_residual(s, InnerProduct.identity(4),
                                                      rng.normal(size=4)), 0.0)


def test_riemannian_residual_milnor_examples():
    s = milnor_space(1.0, 0.0, 0.0, 1.0)
    ip = InnerProduct.identity(3)
    np.testing.assert_allclose(riemannian_residual(s, ip, [1.0, 0.0, 0.0]), [0.0, 0.0, 0.0])
    r = riemannian_residual(s, ip, [0.0, 1.0, 0.0])
    assert r[0] == -1.0


def test_riemannian_residual_zero_vector():
    s = milnor_space(1.0, 0.0, 0.0, 1.0)
    with raises(ZeroVector):
        riemannian_residual(s, InnerProduct.identity(3), np.zeros(3))


def test_riemannian_residual_uses_m_projection():
    # so(3) over h = span{e3}: e3 + e1 projects to e1
    s = lie_core.reductive_split(lie_core.so3(), [[0, 0, 1]])
    ip = InnerProduct.identity(2)
    Y = np.array([1.0, 0.0, 1.0])
    r = riemannian_residual(s, ip, Y)
    y = s.m_coords(Y)
    expected = [s.bracket_m(Y, j) @ y for j in range(2)]
    np.testing.assert_allclose(r, expected, atol=1e-14)


# Kropina criterion

def test_kropina_residual_at_drift_is_riemannian(rng):
    s, ip = random_group_instance(rng, "sl2")
    X = random_drift(rng, ip, 1.3)
    np.testing.assert_allclose(kropina_residual(s, ip, X, s.from_m(X)),
                               riemannian_residual(s, ip, s.from_m(X)), rtol=1e-12, atol=1e-13)


def test_kropina_residual_abelian(rng):
    s = lie_core.lie_group_space(lie_core.abelian(3))
    ip = InnerProduct.identity(3)
    X = np.array([0.0, 1.0, 0.0])
    Y = random_admissible(rng, ip, X)
    np.testing.assert_array_equal(kropina_residual(s, ip, X, Y), 0.0)


def test_kropina_residual_domain_errors():
    s = lie_core.reductive_split(lie_core.u2(), [[0, 0, 1, 0]])
    ip = InnerProduct.identity(3)
    X = s.m_coords(np.array([0.0, 0.0, 0.0, 1.0]))
    with raises(ZeroProjection):
        kropina_residual(s, ip, X, [0.0, 0.0, 2.0, 0.0])
    with raises(OutsideDomain):
        kropina_residual(s, ip, X, [0.0, 0.0, 0.0, -1.0])
    with raises(ZeroVector):
        kropina_residual(s, ip, X, np.zeros(4))


# General criterion

def test_finsler_residual_riemannian_is_exact(rng):
    s, ip = random_group_instance(rng, "nonunimodular")
    Y = rng.normal(size=3)
    np.testing.assert_array_equal(finsler_residual(s, riemannian(ip), Y),
                                  riemannian_residual(s, ip, Y))


def test_finsler_residual_abelian_randers(rng):
    s = lie_core.lie_group_space(lie_core.abelian(3))
    m = randers(InnerProduct.identity(3), [0.3, 0.0, 0.1])
    np.testing.assert_array_equal(finsler_residual(s, m, rng.normal(size=3)), 0.0)


def closed_form_matches_fundamental_tensor(seed):
    rng = np.random.default_rng(seed)
    s, ip = random_group_instance(rng)
    X = random_drift(rng, ip, rng.uniform(0.5, 2.0))
    y = random_admissible(rng, ip, X)
    m = kropina(ip, X)
    closed = kropina_residual(s, ip, X, s.from_m(y))
    general = finsler_residual(s, m, s.from_m(y))
    factor = F_eval(m, y) ** 3 / ip.dot(y, y)
    scale = np.linalg.norm(np.array([s.bracket_m(s.from_m(y), j) for j in range(s.dim_m)]),
                           axis=1).max(initial=0.0) * np.linalg.norm(ip.matrix @ y) * factor
    assert np.all(np.abs(general - factor * closed) <= 1e-6 * max(scale, 1e-300))


@settings(max_examples=300, deadline=None)
@given(SEEDS)
def test_kropina_closed_form_criterion_matches_fundamental_tensor(seed):
    closed_form_matches_fundamental_tensor(seed)


@mark.slow
@settings(max_examples=1000, deadline=None)
@given(SEEDS)
def test_kropina_closed_form_criterion_matches_fundamental_tensor_at_scale(seed):
    closed_form_matches_fundamental_tensor(seed)


def drift_verdicts_agree(seed):
    rng = np.random.default_rng(seed)
    s, ip = random_group_instance(rng)
    X = random_drift(rng, ip, rng.uniform(0.5, 2.0))
    kr = check_geodesic(s, kropina(ip, X), s.from_m(X))
    rr = check_geodesic(s, riemannian(ip), s.from_m(X))
    assert kr.verdict == rr.verdict
    assert all_close(kr.residuals, rr.residuals, t_rel=1e-12, t_abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(SEEDS)
def test_kropina_and_riemannian_agree_at_drift(seed):
    drift_verdicts_agree(seed)


@mark.slow
@settings(max_examples=1000, deadline=None)
@given(SEEDS)
def test_kropina_and_riemannian_agree_at_drift_at_scale(seed):
    drift_verdicts_agree(seed)


def douglas_residual_is_scaled_riemannian(seed, name):
    rng = np.random.default_rng(seed)
    s, ip = random_group_instance(rng, name)
    D = derived_algebra_m(s)
    # X ⊥ [m, m]_m for the inner product
    X = linalg.null_space(D.T @ ip.matrix)[:, 0]
    X = X / ip.norm(X)
    assert douglas_check(s, ip, X, tol=1e-9)
    y = random_admissible(rng, ip, X)
    m = kropina(ip, X)
    expected = 2.0 / F_eval(m, y) * riemannian_residual(s, ip, y)
    assert all_close(kropina_residual(s, ip, X, y), expected, t_rel=1e-9, t_abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(SEEDS, sampled_from(PROPER_DERIVED))
def test_douglas_kropina_residual_is_scaled_riemannian(seed, name):
    douglas_residual_is_scaled_riemannian(seed, name)


@mark.slow
@settings(max_examples=1000, deadline=None)
@given(SEEDS, sampled_from(PROPER_DERIVED))
def test_douglas_kropina_residual_is_scaled_riemannian_at_scale(seed, name):
    douglas_residual_is_scaled_riemannian(seed, name)


def test_non_douglas_witness():
    # X = e3 meets [g, g] = span{e3}; Y = e1 + e3 is geodesic for Kropina only
    s = lie_core.lie_group_space(lie_core.heisenberg())
    ip = InnerProduct.identity(3)
    X = np.array([0.0, 0.0, 1.0])
    assert not douglas_check(s, ip, X)
    Y = np.array([1.0, 0.0, 1.0])
    assert check_geodesic(s, kropina(ip, X), Y).is_geodesic
    assert not check_geodesic(s, riemannian(ip), Y).is_geodesic


@settings(max_examples=100, deadline=None)
@given(SEEDS, sampled_from(("riemannian", "kropina", "randers")), sampled_from((0.5, 3.0)))
def test_verdicts_are_scale_invariant(seed, family, lam):
    rng = np.random.default_rng(seed)
    s, ip = random_group_instance(rng)
    X = random_drift(rng, ip, 0.5)
    m = {"riemannian": riemannian(ip), "kropina": kropina(ip, X), "randers": randers(ip, X)}[family]
    y = random_admissible(rng, ip, X)
    assert check_geodesic(s, m, y).verdict == check_geodesic(s, m, lam * y).verdict
    if family == "kropina":
        r1, r2 = kropina_residual(s, ip, X, y), kropina_residual(s, ip, X, lam * y)
        assert all_close(r2, lam * r1, t_rel=1e-12, t_abs=1e-14)


def test_check_geodesic_reports():
    s = milnor_space(1.0, 0.0, 0.0, 1.0)
    ip = InnerProduct.identity(3)
    report = check_geodesic(s, riemannian(ip), [0.0, 1.0, 0.0])
    assert report.verdict is Verdict.NOT_GEODESIC
    assert report.max_residual == 1.0
    assert check_geodesic(s, riemannian(ip), [2.0, 0.0, 0.0]).is_geodesic
    outside = check_geodesic(s, kropina(ip, [1.0, 0.0, 0.0]), [-1.0, 0.2, 0.0])
    assert outside.verdict is Verdict.OUTSIDE_DOMAIN
    assert outside.to_dict()["residuals"] is None
    with raises(ZeroVector):
        check_geodesic(s, riemannian(ip), np.zeros(3))


@mark.parametrize("family", ("riemannian", "kropina", "alphabeta"))
def test_batched_residual_matches_pointwise(family, rng):
    s, ip = random_group_instance(rng, "so3")
    X = random_drift(rng, ip, 0.4)
    m = {"riemannian": riemannian(ip),
         "kropina": kropina(ip, X),
         "alphabeta": alpha_beta(ip, X, phi_parse("1+s+s^2"))}[family]
    Y = np.array([random_admissible(rng, ip, X) for _ in range(5)])
    batch = batched_residual(s, m)(Y)
    for y, row in zip(Y, batch):
        pointwise = metric_residual(s, m, y)
        if family == "kropina":
            pointwise = 0.5 * F_eval(m, y) * pointwise
        assert all_close(row, pointwise, t_rel=1e-6, t_abs=1e-12)


def test_batched_residual_nan_outside_kropina_domain():
    s = milnor_space(1.0, 0.0, 0.0, 1.0)
    m = kropina(InnerProduct.identity(3), [1.0, 0.0, 0.0])
    rows = batched_residual(s, m)(np.array([[-1.0, 0.5, 0.0], [1.0, 0.5, 0.0]]))
    assert np.all(np.isnan(rows[0]))
    assert np.all(np.isfinite(rows[1]))


# Sampling and search

def test_sphere_samples_are_unit(rng):
    ip = InnerProduct(np.diag([1.0, 4.0, 9.0]))
    Y = sphere_samples(ip, 50, seed=3)
    np.testing.assert_allclose(np.einsum("si,ij,sj->s", Y, ip.matrix, Y), 1.0, atol=1e-12)
    np.testing.assert_array_equal(Y, sphere_samples(ip, 50, seed=3))
    F = sphere_samples(ip, 50, seed=3, method="fibonacci")
    np.testing.assert_allclose(np.einsum("si,ij,sj->s", F, ip.matrix, F), 1.0, atol=1e-12)


def test_sphere_samples_methods():
    with raises(DimensionMismatch):
        sphere_samples(InnerProduct.identity(4), 10, seed=0, method="fibonacci")
    with raises(ValueError):
        sphere_samples(InnerProduct.identity(3), 10, seed=0, method="grid")


def test_canonical_orientation():
    G = np.eye(3)
    Y = canonical(np.array([[0.0, -2.0, 1.0], [1e-12, 0.0, -3.0]]), G, True)
    np.testing.assert_allclose(Y, [unit([0.0, 2.0, -1.0]), [-1e-12 / 3.0, 0.0, 1.0]])
    kept = canonical(np.array([[0.0, -2.0, 0.0]]), G, False)
    np.testing.assert_allclose(kept, [[0.0, -1.0, 0.0]])


def test_find_abelian_is_a_manifold():
    s = lie_core.lie_group_space(lie_core.abelian(3))
    axes = find_geodesic_vectors(s, riemannian(InnerProduct.identity(3)), search())
    assert axes.manifold
    assert axes.count is None
    assert axes.to_dict()["solution_manifold"] is True


def test_find_three_axes_for_positive_discriminant():
    s = milnor_space(2.0, 2.0, 1.0, -1.0)
    G = np.eye(3)
    axes = find_geodesic_vectors(s, riemannian(InnerProduct.identity(3)), search())
    expected = np.array([[1.0, 0.0, 0.0],
                         unit([0.0, (-3.0 + SQ17) / 4.0, 1.0]),
                         unit([0.0, (-3.0 - SQ17) / 4.0, 1.0])])
    assert axes.count == 3
    assert same_axes(axes.axes, expected, G, identify_antipodes=True, angle=1e-6)
    np.testing.assert_allclose(np.einsum("si,si->s", axes.axes, axes.axes), 1.0, atol=1e-12)
    assert np.all(axes.angles[~np.eye(3, dtype=bool)] > 1e-4)


def test_find_single_axis_for_negative_discriminant():
    s = milnor_space(1.0, 0.0, 0.0, 1.0)
    axes = find_geodesic_vectors(s, riemannian(InnerProduct.identity(3)), search())
    assert axes.count == 1
    np.testing.assert_allclose(np.abs(axes.axes[0]), [1.0, 0.0, 0.0], atol=1e-8)


def test_found_axes_reverify():
    s = milnor_space(2.0, 2.0, 1.0, -1.0)
    m = randers(InnerProduct.identity(3), [0.4, 0.0, 0.0])
    axes = find_geodesic_vectors(s, m, search(samples=1500))
    assert axes.count == 3
    for v in axes.axes:
        assert check_geodesic(s, m, s.from_m(v)).max_residual <= 1e-9


def test_search_summary_is_logged_with_arguments(caplog):
    s = milnor_space(1.0, 0.0, 0.0, 1.0)
    with caplog.at_level(logging.INFO, logger="app.services.geodesic_solver"):
        find_geodesic_vectors(s, riemannian(InnerProduct.identity(3)), search())
    (record,) = [r for r in caplog.records if r.msg.startswith("found %d geodesic axes")]
    assert record.args[0] == 1
    assert record.getMessage().startswith("found 1 geodesic axes (riemannian, ")


def test_find_is_deterministic_across_workers():
    s = milnor_space(2.0, 2.0, 1.0, -1.0)
    m = riemannian(InnerProduct.identity(3))
    one = find_geodesic_vectors(s, m, search(samples=3000, seed=7, workers=1))
    many = find_geodesic_vectors(s, m, search(samples=3000, seed=7, workers=4))
    np.testing.assert_array_equal(one.axes, many.axes)
    assert one.converged == many.converged


def test_find_rejects_large_dimension():
    s = lie_core.lie_group_space(lie_core.abelian(7))
    with raises(DimensionMismatch):
        find_geodesic_vectors(s, riemannian(InnerProduct.identity(7)), search(samples=10))


def test_douglas_kropina_axes_match_riemannian_half_space():
    s = milnor_space(2.0, 2.0, 1.0, -1.0)
    ip = InnerProduct.identity(3)
    X = np.array([1.0, 0.0, 0.0])
    assert douglas_check(s, ip, X)
    riem = find_geodesic_vectors(s, riemannian(ip), search())
    krop = find_geodesic_vectors(s, kropina(ip, X), search())
    assert not krop.identify_antipodes
    beta = riem.axes @ X
    inside = riem.axes[np.abs(beta) > 1e-6] * np.sign(beta[np.abs(beta) > 1e-6])[:, None]
    assert same_axes(krop.axes, inside, ip.matrix, identify_antipodes=False, angle=1e-4)
    assert np.all(krop.axes @ X > 0.0)


def half_space_axes(axes, G, X, band=(1e-9, 1e-3)):
    """Riemannian axes oriented into ⟨X, y⟩ > 0, or None when one sits near the boundary"""
    cos = axes @ G @ X / np.sqrt(X @ G @ X)
    if np.any((np.abs(cos) > band[0]) & (np.abs(cos) < band[1])):
        return None
    keep = np.abs(cos) >= band[1]
    return axes[keep] * np.sign(cos[keep])[:, None]


def compare_axis_sets(seed, douglas):
    """(compared, same) for one random non-unimodular instance"""
    rng = np.random.default_rng(seed)
    s = lie_core.lie_group_space(build(random_params(rng))[0])
    ip = InnerProduct.identity(3)
    if douglas:
        X = linalg.null_space(derived_algebra_m(s).T @ ip.matrix)[:, 0]
    else:
        X = unit(rng.normal(size=3))
        while douglas_check(s, ip, X):
            X = unit(rng.normal(size=3))
    X = rng.uniform(0.5, 2.0) * X / ip.norm(X)
    riem = find_geodesic_vectors(s, riemannian(ip), search())
    if riem.manifold:
        return False, None
    inside = half_space_axes(riem.axes, ip.matrix, X)
    if inside is None:
        return False, None
    krop = find_geodesic_vectors(s, kropina(ip, X), search())
    if krop.manifold:
        return True, False
    return True, same_axes(krop.axes, inside, ip.matrix, identify_antipodes=False, angle=1e-4)


def axis_set_sweep(count, douglas, offset=0):
    outcomes = [compare_axis_sets(offset + k, douglas) for k in range(count)]
    return [same for compared, same in outcomes if compared]


def test_douglas_kropina_axis_sets_match_riemannian():
    results = axis_set_sweep(10, douglas=True)
    assert results
    assert all(results)


@mark.slow
def test_douglas_kropina_axis_sets_match_riemannian_at_scale():
    results = axis_set_sweep(200, douglas=True, offset=1000)
    assert len(results) >= 100
    assert all(results)


@mark.slow
def test_non_douglas_kropina_axis_sets_differ():
    results = axis_set_sweep(200, douglas=False, offset=5000)
    assert results
    assert not all(results)


# Structural checks

@mark.parametrize("X expected".split(),
                  (([1.0, 0.0, 0.0], True),
                   ([0.0, 0.0, 1.0], False)))
def test_douglas_check_heisenberg(X, expected, heisenberg_space, identity3):
    assert douglas_check(heisenberg_space, identity3, X) is expected


def test_douglas_check_abelian(rng):
    s = lie_core.lie_group_space(lie_core.abelian(3))
    assert douglas_check(s, InnerProduct.identity(3), rng.normal(size=3))


@mark.parametrize("space expected".split(),
                  ((lie_core.lie_group_space(lie_core.abelian(3)), True),
                   (lie_core.lie_group_space(lie_core.so3()), True),
                   (lie_core.lie_group_space(lie_core.nonunimodular(1.0, 0.0, 0.0, 1.0)), False)))
def test_naturally_reductive(space, expected):
    assert naturally_reductive_check(space, InnerProduct.identity(3)) is expected


def test_naturally_reductive_depends_on_metric():
    s = lie_core.lie_group_space(lie_core.so3())
    assert not naturally_reductive_check(s, InnerProduct(np.diag([1.0, 2.0, 3.0])))


def test_transfer_randers_abelian_verified(rng):
    s = lie_core.lie_group_space(lie_core.abelian(3))
    m = randers(InnerProduct.identity(3), [0.2, 0.3, 0.0])
    report = transfer_check(s, m, rng.normal(size=3))
    assert report.applies
    assert report.phi_second == 0.0
    assert report.riemannian_geodesic
    assert report.verified


def test_transfer_does_not_apply_when_drift_meets_brackets():
    s = lie_core.lie_group_space(lie_core.heisenberg())
    m = randers(InnerProduct.identity(3), [0.0, 0.0, 0.5])
    report = transfer_check(s, m, [1.0, 1.0, 0.3])
    assert report.phi_concave
    assert not report.x_orthogonal
    assert not report.applies
    assert report.verified is None
    assert report.to_dict()["applies"] is False


def test_transfer_convex_phi_fails_concavity():
    s = lie_core.lie_group_space(lie_core.abelian(2))
    m = alpha_beta(InnerProduct.identity(2), [0.3, 0.0], phi_parse("1+s^2"))
    report = transfer_check(s, m, [1.0, 0.0])
    assert abs(report.phi_second - 2.0) <= 1e-12
    assert not report.applies


def test_riemannian_geodesic_transfer():
    s = milnor_space(1.0, 0.0, 0.0, 1.0)
    m = randers(InnerProduct.identity(3), [0.5, 0.0, 0.0])
    (report,) = riemannian_geodesic_transfer(s, m, [[1.0, 0.0, 0.0]])
    assert report.applies and report.verified
    assert report.finsler_max_residual <= 1e-6
    with raises(InvalidMetric):
        riemannian_geodesic_transfer(s, m, [[0.0, 1.0, 0.0]])


@mark.parametrize("name X phi".split(),
                  (("so3", [0.1, 0.2, 0.2], None),
                   ("so3", [0.0, 0.3, 0.1], "1+s-0.25*s^2"),
                   ("u2", [0.1, 0.0, 0.2, 0.2], None),
                   ("u2", [0.2, 0.1, 0.0, 0.1], "1+s-0.25*s^2")))
@mark.parametrize("c", (0.5, 2.0, -1.0))
def test_transfer_applies_on_bi_invariant_base(name, X, phi, c):
    algebra = getattr(lie_core, name)()
    s = lie_core.lie_group_space(algebra)
    ip = InnerProduct.identity(algebra.dim)
    m = randers(ip, X) if phi is None else alpha_beta(ip, X, phi_parse(phi))
    y = c * np.asarray(X)
    (report,) = riemannian_geodesic_transfer(s, m, [y])
    assert report.x_orthogonal
    assert report.phi_concave
    assert report.applies
    assert report.riemannian_geodesic
    assert report.verified
    assert check_geodesic(s, m, s.from_m(y)).is_geodesic


def test_derived_series_case():
    assert not derived_series_case(lie_core.lie_group_space(lie_core.so3())).proper_projection
    case = derived_series_case(lie_core.lie_group_space(lie_core.heisenberg()))
    assert case.proper_projection
    assert case.index == 0
    assert case.to_dict()["projected_ranks"] == [3, 1, 0]
