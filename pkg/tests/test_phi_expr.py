import numpy as np

from pytest                import mark
from pytest                import raises
from hypothesis            import given
from hypothesis            import settings
from hypothesis.strategies import floats

from app.core.exceptions     import PhiDomainError
from app.core.exceptions     import PhiParseError
from app.services.phi_expr   import KROPINA_PHI
from app.services.phi_expr   import RANDERS_PHI
from app.services.phi_expr   import phi_derivatives
from app.services.phi_expr   import phi_parse
from app.services.phi_expr   import regularity_check

EXPRESSIONS = ("1+s",
               "1/s",
               "sqrt(1+s^2)",
               "exp(s)",
               "log(2+s)",
               "(1+s)^2",
               "1 + s + s^2/2 - 3*s^3",
               "(1+s^2)^(1/2)",
               "(2+s)^-3",
               "s^(1/3)",
               "-s*exp(-s^2)/(1+s^4)")


@mark.parametrize("text value".split(),
                  (("1+s", 1.5),
                   ("1/s", 2.0),
                   ("2*s^2 - 1", -0.5),
                   ("sqrt(4)", 2.0),
                   ("exp(0)", 1.0),
                   ("log(1)", 0.0),
                   ("s^(1/3)", 0.5 ** (1 / 3)),
                   ("--s", 0.5),
                   ("  1 +   s ", 1.5),
                   ("2^-1", 0.5)))
def test_phi_parse_evaluates(text, value):
    assert np.isclose(phi_parse(text)(0.5), value, rtol=1e-15, atol=1e-15)


def test_builtin_phi():
    assert RANDERS_PHI(0.25) == 1.25
    assert KROPINA_PHI(0.25) == 4.0


@mark.parametrize("text offset".split(),
                  (("1+(", 3),
                   ("2*#", 2),
                   ("s^1.5", 2),
                   ("sqrt(s", 6),
                   ("", 0),
                   ("s s", 2),
                   ("s^(1/0)", 6)))
def test_phi_parse_errors_carry_offset(text, offset):
    with raises(PhiParseError) as info:
        phi_parse(text)
    assert info.value.offset == offset
    assert info.value.expected


def test_phi_parse_error_lists_expected_tokens():
    with raises(PhiParseError) as info:
        phi_parse("1+(")
    assert "s" in info.value.expected
    assert "(" in info.value.expected
    assert info.value.to_dict()["context"]["offset"] == 3


def test_phi_parse_offset_counts_bytes():
    with raises(PhiParseError) as info:
        phi_parse("σ")
    assert info.value.offset == 0
    with raises(PhiParseError) as info:
        phi_parse("1+σ")
    assert info.value.offset == 2


@mark.parametrize("text s".split(),
                  (("1/s", 0.0),
                   ("log(s)", -1.0),
                   ("sqrt(s)", -4.0),
                   ("s^-2", 0.0)))
def test_phi_domain_errors(text, s):
    p = phi_parse(text)
    with raises(PhiDomainError):
        p(s)
    assert np.isnan(p.values(np.array([s]))[0])


def test_linear_phi_derivatives():
    d1, d2 = phi_derivatives(phi_parse("1+s"))
    np.testing.assert_allclose(d1.values(np.linspace(-1, 1, 5)), 1.0)
    np.testing.assert_allclose(d2.values(np.linspace(-1, 1, 5)), 0.0)


def test_kropina_phi_derivatives():
    d1, d2 = phi_derivatives(phi_parse("1/s"))
    assert np.isclose(d1(0.5), -4.0, rtol=1e-15)
    assert np.isclose(d2(0.5), 16.0, rtol=1e-15)


def test_sqrt_phi_second_derivative_at_zero():
    _, d2 = phi_derivatives(phi_parse("sqrt(1+s^2)"))
    assert np.isclose(d2(0.0), 1.0, rtol=1e-15)


@mark.parametrize("text", EXPRESSIONS)
@settings(max_examples=25, deadline=None)
@given(floats(min_value=0.2, max_value=0.9))
def test_phi_derivatives_match_central_differences(text, s):
    p = phi_parse(text)
    d1, d2 = phi_derivatives(p)
    h = 1e-5
    fd1 = (p(s + h) - p(s - h)) / (2 * h)
    fd2 = (d1(s + h) - d1(s - h)) / (2 * h)
    assert np.isclose(d1(s), fd1, rtol=1e-6, atol=1e-6)
    assert np.isclose(d2(s), fd2, rtol=1e-6, atol=1e-6)


def test_derivative_tree_renders_and_reparses():
    d1, _ = phi_derivatives(phi_parse("sqrt(1+s^2)"))
    again = phi_parse(d1.text)
    grid = np.linspace(-2.0, 2.0, 9)
    np.testing.assert_allclose(again.values(grid), d1.values(grid), rtol=1e-15)


@mark.parametrize("text b".split(), (("1+s", 0.5), ("1", 1.0), ("exp(s)", 0.5)))
def test_regularity_regular(text, b):
    report = regularity_check(phi_parse(text), b)
    assert report.regular
    assert report.singular_at == () and report.undefined_at == ()
    assert report.min_condition > 0.0


def test_regularity_riemannian_condition_is_one():
    report = regularity_check(phi_parse("1"), 1.0)
    assert report.min_condition == 1.0


@mark.parametrize("b", (0.1, 0.5, 2.0))
def test_regularity_kropina_is_singular(b):
    report = regularity_check(phi_parse("1/s"), b)
    assert not report.regular
    assert len(report.singular_at) + len(report.undefined_at) > 0
    payload = report.to_dict(limit=3)
    assert len(payload["singular_at"]) <= 3
    assert payload["regular"] is False


def test_regularity_needs_positive_b():
    with raises(PhiDomainError):
        regularity_check(RANDERS_PHI, 0.0)
