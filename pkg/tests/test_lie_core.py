import numpy as np

from pytest                import mark
from pytest                import raises
from hypothesis            import given
from hypothesis            import settings
from hypothesis.strategies import integers

from app.core.exceptions  import DegenerateOnH
from app.core.exceptions  import DimensionMismatch
from app.core.exceptions  import NotReductive
from app.core.exceptions  import NotSubalgebra
from app.services         import linalg
from app.services         import lie_core
from app.services.lie_core import LieAlgebraSpec
from app.services.lie_core import bracket
from app.services.lie_core import check_invariant_vector
from app.services.lie_core import derived_series
from app.services.lie_core import is_semisimple
from app.services.lie_core import killing_form
from app.services.lie_core import reductive_space
from app.services.lie_core import reductive_split
from app.services.lie_core import validate

from .testing_utils import CATALOGUE
from .testing_utils import random_algebra

SEEDS = integers(min_value=0, max_value=2**32 - 1)

# [e1, e2] = e3, [e1, e3] = e3, [e2, e3] = e1
BROKEN = LieAlgebraSpec(dim=3, structure=((0, 1, 2, 1.0), (0, 2, 2, 1.0), (1, 2, 0, 1.0)))


def test_bracket_abelian_is_zero(rng):
    a = lie_core.abelian(4)
    np.testing.assert_array_equal(bracket(a, rng.normal(size=4), rng.normal(size=4)), 0.0)


def test_bracket_reads_table():
    np.testing.assert_allclose(bracket(lie_core.heisenberg(), [1, 0, 0], [0, 1, 0]), [0, 0, 1])
    np.testing.assert_allclose(bracket(lie_core.heisenberg(), [0, 1, 0], [1, 0, 0]), [0, 0, -1])


def test_bracket_so3_bilinear_expansion():
    np.testing.assert_allclose(bracket(lie_core.so3(), [1, 1, 0], [0, 1, 1]), [1, -1, 1])


def test_bracket_dimension_mismatch():
    with raises(DimensionMismatch):
        bracket(lie_core.so3(), [1, 0], [0, 1, 0])


def test_structure_entries_must_be_ordered():
    with raises(DimensionMismatch):
        LieAlgebraSpec(dim=3, structure=((1, 0, 2, 1.0),))


def test_ad_matches_bracket(rng):
    a = random_algebra(rng, "sl2")
    u, v = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(a.ad(u) @ v, bracket(a, u, v), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(SEEDS)
def test_bracket_bilinear_and_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    a = random_algebra(rng)
    u, v, w = rng.normal(size=(3, a.dim))
    s, t = rng.normal(size=2)
    lhs = bracket(a, s * u + t * w, v)
    rhs = s * bracket(a, u, v) + t * bracket(a, w, v)
    scale = max(1.0, np.abs(lhs).max())
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * scale * 10)
    np.testing.assert_allclose(bracket(a, u, v), -bracket(a, v, u), atol=1e-12 * scale)


@mark.parametrize("name", sorted(CATALOGUE))
def test_catalogue_satisfies_jacobi(name):
    report = validate(CATALOGUE[name]())
    assert report.passed
    assert report.to_dict()["passed"] is True


def test_validate_abelian_zero_violation():
    report = validate(lie_core.abelian(3))
    assert report.passed
    assert report.max_violation == 0.0
    assert report.worst_triple is None


def test_validate_names_offending_triple():
    report = validate(BROKEN)
    assert not report.passed
    assert report.max_violation > 1e-10
    assert sorted(report.worst_triple) == [0, 1, 2]
    assert report.to_dict()["worst_triple"] is not None


@mark.parametrize("factory".split(), ((lie_core.heisenberg,), (lambda: lie_core.abelian(3),)))
def test_killing_form_vanishes_on_nilpotent(factory):
    data = killing_form(factory())
    np.testing.assert_allclose(data.K, 0.0)
    assert data.radical_basis.shape == (3, 3)


def test_killing_form_so3():
    data = killing_form(lie_core.so3())
    np.testing.assert_allclose(data.K, -2.0 * np.eye(3), atol=1e-14)
    assert data.radical_basis.shape == (3, 0)


@settings(max_examples=30, deadline=None)
@given(SEEDS)
def test_killing_form_invariance_and_radical_ideal(seed):
    rng = np.random.default_rng(seed)
    a = random_algebra(rng)
    data = killing_form(a)
    K = data.K
    np.testing.assert_allclose(K, K.T, atol=1e-12 * max(1.0, np.abs(K).max()))
    u, v, w = rng.normal(size=(3, a.dim))
    lhs = bracket(a, u, v) @ K @ w + v @ K @ bracket(a, u, w)
    scale = max(1.0, np.abs(K).max()) * np.linalg.norm(u) * np.linalg.norm(v) * np.linalg.norm(w)
    assert abs(lhs) <= 1e-9 * scale
    R = data.radical_basis
    if R.shape[1]:
        assert np.max(np.abs(K @ R)) <= 1e-9 * max(1.0, np.abs(K).max())
        images = np.column_stack([bracket(a, x, r) for x in np.eye(a.dim) for r in R.T])
        assert linalg.matrix_rank(np.hstack([R, images]), 1e-8) == R.shape[1]


def test_derived_series_examples():
    ranks = lambda a: [term.shape[1] for term in derived_series(a)]
    assert ranks(lie_core.abelian(3)) == [3, 0]
    assert ranks(lie_core.heisenberg()) == [3, 1, 0]
    assert ranks(lie_core.so3()) == [3, 3]
    assert lie_core.is_solvable(lie_core.heisenberg())
    assert lie_core.is_nilpotent(lie_core.filiform4())
    assert lie_core.is_solvable(lie_core.solvable2d())
    assert not lie_core.is_nilpotent(lie_core.solvable2d())
    assert not lie_core.is_solvable(lie_core.so3())


def test_heisenberg_derived_algebra_is_center():
    series = derived_series(lie_core.heisenberg())
    np.testing.assert_allclose(np.abs(series[1][:, 0]), [0, 0, 1], atol=1e-12)


@mark.parametrize("factory expected".split(),
                  ((lie_core.so3, True),
                   (lie_core.sl2, True),
                   (lie_core.heisenberg, False),
                   (lambda: lie_core.abelian(3), False),
                   (lie_core.u2, False)))
def test_is_semisimple(factory, expected):
    assert is_semisimple(factory()) is expected


def test_reductive_split_trivial_h():
    s = reductive_split(lie_core.so3(), np.zeros((0, 3)))
    assert s.dim_h == 0 and s.dim_m == 3
    np.testing.assert_allclose(s.P_m, np.eye(3))
    np.testing.assert_allclose(s.P_h, 0.0)


def test_reductive_split_so3():
    s = reductive_split(lie_core.so3(), [[0, 0, 1]])
    assert s.dim_m == 2
    assert linalg.same_subspace(s.m_basis.T, np.eye(3)[:, :2])
    np.testing.assert_allclose(s.P_h + s.P_m, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(s.P_h @ s.P_m, 0.0, atol=1e-12)


def test_reductive_split_degenerate_on_h():
    with raises(DegenerateOnH):
        reductive_split(lie_core.heisenberg(), [[0, 0, 1]])


def test_reductive_split_rejects_non_subalgebra():
    with raises(NotSubalgebra):
        reductive_split(lie_core.u2(), [[1, 0, 0, 0], [0, 1, 0, 0]])


def test_reductive_space_rejects_non_invariant_complement():
    # h = span{e3} in so(3) with m = span{e1, e2 + e3}
    with raises(NotReductive):
        reductive_space(lie_core.so3(), [[0, 0, 1]], [[1, 0, 0], [0, 1, 1]])


def test_reductive_space_dimension_count():
    with raises(NotReductive):
        reductive_space(lie_core.so3(), [[0, 0, 1]], [[1, 0, 0]])


def test_bracket_maps_match_projected_brackets(rng):
    s = reductive_split(lie_core.u2(), [[0, 0, 1, 0]])
    y = rng.normal(size=s.dim_m)
    Y = s.from_m(y)
    for j in range(s.dim_m):
        np.testing.assert_allclose(s.bracket_maps[j] @ y, s.bracket_m(Y, j), atol=1e-12)


def test_check_invariant_vector_trivial_h(rng):
    s = reductive_split(lie_core.so3(), np.zeros((0, 3)))
    assert check_invariant_vector(s, rng.normal(size=3))


def test_check_invariant_vector_so3_rotation_axis():
    s = reductive_split(lie_core.so3(), [[0, 0, 1]])
    X = s.m_coords(np.array([1.0, 0.0, 0.0]))
    assert not check_invariant_vector(s, X)


def test_check_invariant_vector_center_of_u2():
    s = reductive_split(lie_core.u2(), [[0, 0, 1, 0]])
    X = s.m_coords(np.array([0.0, 0.0, 0.0, 1.0]))
    assert check_invariant_vector(s, X)


def test_change_basis_preserves_jacobi(rng):
    a = random_algebra(rng, "so3")
    assert validate(a).passed
    assert is_semisimple(a)
