from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apkinetic.errors import ConfigError, SingularMatrixError, UnknownSchemeError, UnsupportedOrderError
from apkinetic.tableaux import (BUILTIN, ButcherTableau, IMEXPair, bhat_matrix, builtin_pair, condition_rows,
                                dump_pair, is_globally_stiffly_accurate, load_pair, order_conditions,
                                positivity_conditions, validate_pair)

BE224, BE355, EULER = "IMEX-BE(2,2,4)", "IMEX-BE(3,5,5)", "IMEX-EULER(1,1,1)"


def _edit(pair, part, row=None, col=None, w_index=None, value=None):
    tab = getattr(pair, part)
    A = [list(r) for r in tab.A]
    w = list(tab.w)
    if w_index is not None:
        w[w_index] = value
    else:
        A[row][col] = value
    new = ButcherTableau(A, w, tab.c)
    kw = {"explicit": pair.explicit, "implicit": pair.implicit, part: new}
    return IMEXPair(pair.name + "*", **kw)


def test_table1_entries():
    p = builtin_pair(BE224)
    assert p.implicit.A == tuple(tuple(Fraction(x) for x in r) for r in
                                 [[2, 0, 0, 0], [-2, 2, 0, 0], [0, -1, 2, 0], [0, "1/2", "-3/2", 2]])
    assert p.implicit.w == (0, Fraction(1, 2), Fraction(-3, 2), 2)
    assert p.implicit.c == (2, 0, 1, 1)


def test_table2_last_row_equals_weights():
    p = builtin_pair(BE355)
    expected = (Fraction(1, 4), 0, Fraction(3, 4), Fraction(-1, 2), Fraction(1, 2))
    assert p.implicit.A[4] == expected == p.implicit.w
    assert p.is_ck_type


def test_euler_pair():
    p = builtin_pair(EULER)
    assert p.explicit.A == ((0,),) and p.explicit.w == (1,)
    assert p.implicit.A == ((1,),) and p.implicit.w == (1,)


def test_unknown_scheme_lists_available():
    with pytest.raises(UnknownSchemeError) as exc:
        builtin_pair("RK4")
    assert all(name in str(exc.value) for name in BUILTIN)
    assert isinstance(exc.value, KeyError)


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_builtins_validate(name):
    rep = validate_pair(builtin_pair(name))
    assert rep.satisfied and rep.worst_violation == 0.0


def test_injected_row_sum_defect():
    p = builtin_pair(BE224)
    bad = _edit(p, "implicit", 0, 0, value=3)
    rep = validate_pair(bad)
    assert not rep.satisfied
    assert rep.worst_violation == pytest.approx(1.0, abs=1e-15)
    assert (("implicit", "c", 1), 2.0) in rep.details


def test_explicit_diagonal_is_a_structure_violation():
    p = builtin_pair(BE224)
    A = [list(r) for r in p.explicit.A]
    A[1][1] = Fraction(1, 3)
    bad = IMEXPair("x", ButcherTableau(A, p.explicit.w), p.implicit)  # c recomputed
    assert not validate_pair(bad).satisfied


@pytest.mark.parametrize("name,gsa", [(BE224, True), (BE355, True), (EULER, False)])
def test_gsa(name, gsa):
    assert is_globally_stiffly_accurate(builtin_pair(name)).satisfied is gsa


def test_euler_gsa_fails_only_in_explicit_part():
    rep = is_globally_stiffly_accurate(builtin_pair(EULER))
    bad = [idx for idx, v in rep.details if abs(v) > 0]
    assert bad == [("explicit", 1)]


@given(i=st.integers(0, 3), delta=st.floats(1e-10, 1.0), sign=st.sampled_from([-1, 1]),
       part=st.sampled_from(["explicit", "implicit"]))
def test_gsa_flags_any_weight_perturbation(i, delta, sign, part):
    p = builtin_pair(BE224)
    w = getattr(p, part).w[i] + Fraction(sign * delta)
    assert not is_globally_stiffly_accurate(_edit(p, part, w_index=i, value=w)).satisfied


def test_gsa_zero_perturbation_is_identity():
    p = builtin_pair(BE224)
    same = _edit(p, "implicit", w_index=2, value=p.implicit.w[2] + 0)
    assert is_globally_stiffly_accurate(same).satisfied


@pytest.mark.parametrize("name,orders", [(BE224, {1: True, 2: True, 3: False}),
                                         (BE355, {1: True, 2: True, 3: True}),
                                         (EULER, {1: True, 2: False, 3: False})])
def test_order_conditions(name, orders):
    for p, ok in orders.items():
        rep = order_conditions(builtin_pair(name), p)
        assert rep.satisfied is ok, (name, p, rep.details)
        if ok:
            assert rep.worst_violation <= 1e-12


def test_table1_w_dot_c_by_hand():
    rep = order_conditions(builtin_pair(BE224), 2)
    values = dict(rep.details)
    # 0*2 + 1/2*0 - 3/2*1 + 2*1
    assert values[("w.c", "II")] == pytest.approx(0.5, abs=1e-15)
    assert values[("w.c", "EE")] == pytest.approx(0.5, abs=1e-15)


def test_euler_second_order_value():
    values = dict(order_conditions(builtin_pair(EULER), 2).details)
    assert values[("w.c", "II")] == 1.0


def test_unsupported_order():
    with pytest.raises(UnsupportedOrderError):
        order_conditions(builtin_pair(BE224), 4)


def _one_stage(a):
    return IMEXPair("one", ButcherTableau([[0]], [1]), ButcherTableau([[a]], [1]))


@pytest.mark.parametrize("a,lam,expected", [(2, 0.0, 0.5), (1, 1.0, 0.5)])
def test_bhat_scalar(a, lam, expected):
    assert bhat_matrix(_one_stage(a), lam)[0, 0] == expected


def test_bhat_singular_for_ck_type():
    with pytest.raises(SingularMatrixError, match="stage 1"):
        bhat_matrix(builtin_pair(BE355), 0.0)


@pytest.mark.parametrize("name", [BE224, BE355])
@pytest.mark.parametrize("lam", [1e-8, 1e-3, 1.0, 1e3])
def test_bhat_residual(name, lam):
    p = builtin_pair(name)
    B = bhat_matrix(p, lam)
    M = lam * np.eye(p.stages) + p.implicit.A_array
    resid = np.abs(M @ B - np.eye(p.stages)).max()
    if p.is_ck_type:
        # bhat_11 = 1/lam: absolute residual is bounded by ulp(|M||B|), so scale it
        resid /= np.abs(M).max() * np.abs(B).max()
    assert resid <= 1e-12
    assert np.allclose(np.triu(B, 1), 0.0)


@pytest.mark.parametrize("lam", [0.1, 0.25, 0.5, 1.0])
def test_table1_positivity_below_one(lam):
    rep = positivity_conditions(builtin_pair(BE224), lam)
    assert rep.satisfied and rep.notes["gsa"]


def test_table1_positivity_violated_at_ten():
    rep = positivity_conditions(builtin_pair(BE224), 10.0)
    assert not rep.satisfied
    outside = [(k, v) for k, v in rep.details if not -1e-12 <= v <= 1 + 1e-12]
    assert outside


def test_positivity_needs_positive_lambda():
    with pytest.raises(ValueError):
        positivity_conditions(builtin_pair(BE224), 0.0)


def test_positivity_one_stage_oracle():
    # A=[1], At=[0]: bhat = 1/(1+lam), c = 1, ct = 0; every family equals 1/(1+lam)
    lam = 0.3
    rep = positivity_conditions(builtin_pair(EULER), lam)
    vals = dict(rep.details)
    assert vals[("bhat.c", 1)] == pytest.approx(1 / 1.3)
    assert vals[("bhat.(c-ct)", 1)] == pytest.approx(1 / 1.3)
    assert rep.satisfied and rep.notes["gsa"] is False


def test_condition_rows_record_singular_as_violation():
    rows = condition_rows(builtin_pair(BE355), lams=(1.0,))
    assert [r.condition for r in rows][:2] == ["structure", "globally stiffly accurate"]


def test_load_pair_parses_rationals_exactly(tmp_path):
    p = builtin_pair(BE355)
    path = tmp_path / "t.json"
    dump_pair(p, path)
    q = load_pair(path)
    assert q.implicit.A == p.implicit.A and q.explicit.w == p.explicit.w
    assert load_pair({"name": "x", "nu": 1, "explicit": {"A": [["0"]], "w": ["1"]},
                      "implicit": {"A": [["1/3"]], "w": ["0.25"]}}).implicit.w == (Fraction(1, 4),)


@pytest.mark.parametrize("doc", [
    {"name": "x", "explicit": {"A": [["0"]], "w": ["1"]}},
    {"name": "x", "nu": 2, "explicit": {"A": [["0"]], "w": ["1"]}, "implicit": {"A": [["1"]], "w": ["1"]}},
    {"name": "x", "explicit": {"A": [["0"]], "w": ["1/0"]}, "implicit": {"A": [["1"]], "w": ["1"]}},
    {"name": "x", "explicit": {"A": [["0", "0"]], "w": ["1"]}, "implicit": {"A": [["1"]], "w": ["1"]}},
])
def test_load_pair_rejects_malformed(doc):
    with pytest.raises(ConfigError):
        load_pair(doc)


@settings(max_examples=50)
@given(st.lists(st.fractions(min_value=-3, max_value=3, max_denominator=12), min_size=6, max_size=6))
def test_row_sum_default_always_consistent(entries):
    A = [[0, 0, 0], [entries[0], 0, 0], [entries[1], entries[2], 0]]
    B = [[entries[3], 0, 0], [entries[4], entries[5], 0], [1, 1, 1]]
    pair = IMEXPair("rand", ButcherTableau(A, [1, 0, 0]), ButcherTableau(B, [1, 1, 1]))
    assert validate_pair(pair).satisfied
