import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsl_corpus import PARAMS, complex_step, corpus, second_partial
from offdiag.dsl import (
    BinOp,
    Call,
    DSLBindError,
    DSLError,
    DSLSyntaxError,
    Neg,
    Num,
    Var,
    bind,
    parameters,
    parse,
    print_canonical,
    variables,
)
from offdiag.exact import SolitonParams, kdv_soliton, sol3d_residual
from offdiag.fields import ScalarField
from offdiag.jets import JetDomainError

CORPUS = corpus(500)
POINTS = np.random.default_rng(11).uniform(-1.0, 1.0, (3, 4))
FIRST = [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)]
SECOND = [((0, 0), (2, 0, 0, 0)), ((0, 2), (1, 0, 1, 0)), ((1, 3), (0, 1, 0, 1)), ((2, 2), (0, 0, 2, 0))]


class TestParse:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("1+2*3", BinOp("+", Num(1.0), BinOp("*", Num(2.0), Num(3.0)))),
            ("2^3^2", BinOp("^", Num(2.0), BinOp("^", Num(3.0), Num(2.0)))),
            ("sin(x1)", Call("sin", Var("x1"))),
        ],
    )
    def test_structure(self, text, expected):
        assert parse(text) == expected

    def test_unary_minus_binds_looser_than_power(self):
        assert print_canonical(parse("-x1^2")) == "-x1^2"
        f = bind("-x1^2")
        assert f.values([[3.0, 0, 0, 0]])[0] == -9.0

    def test_names(self):
        e = parse("k*sin(r) + lambda*exp(v) - t")
        assert variables(e) == {"r", "v", "t"}
        assert parameters(e) == {"k", "lambda"}

    def test_unclosed_call_position(self):
        with pytest.raises(DSLSyntaxError) as info:
            parse("sin(x1")
        err = info.value
        assert (err.offset, err.line, err.column) == (6, 1, 7)
        assert ")" in err.expected

    def test_multiline_position(self):
        with pytest.raises(DSLSyntaxError) as info:
            parse("x1 +\n  * 2")
        assert (info.value.line, info.value.column) == (2, 3)

    @pytest.mark.parametrize("text", ["", "1 +", "sin x1", "x1 $ 2", "(x1", "2..3", "x1^v", "sinn(x1)"])
    def test_rejects(self, text):
        with pytest.raises(DSLError):
            parse(text)

    def test_unknown_function_suggests(self):
        with pytest.raises(DSLSyntaxError) as info:
            parse("sinh2(x1)")
        assert "sinh" in info.value.candidates


class TestBind:
    def test_unbound_parameter_suggests_name(self):
        with pytest.raises(DSLBindError) as info:
            bind("lamda*x1", {"lambda": 0.3})
        assert info.value.name == "lamda"
        assert "lambda" in info.value.candidates

    def test_mask_is_inferred(self):
        assert bind("x1*v + 2").depends == (True, False, True, False)
        assert bind("3").depends == (False, False, False, False)

    def test_field_parameter(self):
        g = ScalarField.coordinate(3)
        f = bind("k*x1", {"k": g})
        assert f.depends == (True, False, False, True)
        assert f.values([[2.0, 0, 0, 5.0]])[0] == 10.0

    def test_mixed_third_partial(self):
        f = bind("x1^2*v")
        assert f.jet([[0.3, 0.1, 0.7, 0.0]], 3).partial((2, 0, 1, 0))[0] == 2.0

    def test_abs_at_zero_is_a_domain_error(self):
        with pytest.raises(JetDomainError):
            bind("abs(x1)").values([[0.0, 0, 0, 0]])

    def test_soliton_expression_matches_builder(self):
        f = bind("0.5*sech(0.5*(phi - theta))^2")
        p = np.random.default_rng(0).uniform(-1, 1, (10, 4))
        np.testing.assert_allclose(f.values(p), kdv_soliton(SolitonParams(1.0)).values(p), rtol=1e-14)
        assert np.abs(sol3d_residual(f, p)).max() < 1e-9


class TestCorpus:
    def test_corpus_size(self):
        assert len(CORPUS) == 500
        assert len({s.text for s in CORPUS}) > 400

    @pytest.mark.parametrize("chunk", range(5))
    def test_round_trip(self, chunk):
        for s in CORPUS[chunk::5]:
            e = parse(s.text)
            text = print_canonical(e)
            assert parse(text) == e, s.text
            assert print_canonical(parse(text)) == text

    @pytest.mark.parametrize("chunk", range(5))
    def test_values_and_first_derivatives_are_exact(self, chunk):
        for s in CORPUS[chunk::5]:
            jet = bind(s.text, PARAMS).jet(POINTS, 1)
            ref = s.fn(POINTS.astype(complex)).real
            assert np.all(np.abs(jet.value - ref) <= 1e-12 * np.maximum(1, np.abs(ref))), s.text
            for slot, alpha in enumerate(FIRST):
                got = jet.partial(alpha)
                for i, p in enumerate(POINTS):
                    want = complex_step(s.fn, p, slot)
                    assert abs(got[i] - want) <= 1e-12 * max(1.0, abs(want)), (s.text, alpha)

    @pytest.mark.parametrize("chunk", range(5))
    def test_second_derivatives_match_finite_differences(self, chunk):
        for s in CORPUS[chunk::5]:
            jet = bind(s.text, PARAMS).jet(POINTS, 2)
            for (i, j), alpha in SECOND:
                got = jet.partial(alpha)
                for k, p in enumerate(POINTS):
                    want = second_partial(s.fn, p, i, j)
                    assert abs(got[k] - want) <= 1e-6 * max(1.0, abs(want)), (s.text, alpha)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1e6, allow_nan=False), st.sampled_from(["x1", "theta", "v", "t"]), st.booleans())
def test_numbers_print_and_reparse(c, var, negate):
    num = Neg(Num(c)) if negate else Num(c)
    e = BinOp("*", num, Var(var))
    assert parse(print_canonical(e)) == e
