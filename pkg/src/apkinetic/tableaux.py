"""IMEX Runge-Kutta double Butcher tableaux and their structural checks.

Entries are kept as :class:`fractions.Fraction` so the builtin schemes are
exact; every check converts once to float64 and compares with a fixed slack.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError, SingularMatrixError, UnknownSchemeError, UnsupportedOrderError

#: slack used for every algebraic condition
TOL = 1e-12
#: slack on stored abscissae and the stiffly-accurate equalities
EXACT_TOL = 1e-14


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, int):
        return Fraction(x)
    # floats: exact binary value, limit_denominator would guess
    return Fraction(x)


@dataclass(frozen=True)
class ButcherTableau:
    A: tuple[tuple[Fraction, ...], ...]
    w: tuple[Fraction, ...]
    c: tuple[Fraction, ...] | None = None

    def __post_init__(self):
        A = tuple(tuple(_frac(a) for a in row) for row in self.A)
        w = tuple(_frac(x) for x in self.w)
        nu = len(A)
        if nu == 0 or any(len(row) != nu for row in A) or len(w) != nu:
            raise ValueError("A must be square and w must match its size")
        c = tuple(sum(row, Fraction(0)) for row in A) if self.c is None else tuple(_frac(x) for x in self.c)
        if len(c) != nu:
            raise ValueError("c must match the tableau size")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "c", c)

    @property
    def stages(self) -> int:
        return len(self.A)

    @property
    def A_array(self) -> np.ndarray:
        return np.array([[float(a) for a in row] for row in self.A])

    @property
    def w_array(self) -> np.ndarray:
        return np.array([float(x) for x in self.w])

    @property
    def c_array(self) -> np.ndarray:
        return np.array([float(x) for x in self.c])

    @property
    def is_explicit(self) -> bool:
        return all(self.A[i][j] == 0 for i in range(self.stages) for j in range(i, self.stages))

    def to_dict(self) -> dict:
        s = lambda x: str(x)  # noqa: E731
        return {"A": [[s(a) for a in row] for row in self.A],
                "w": [s(x) for x in self.w],
                "c": [s(x) for x in self.c]}


@dataclass(frozen=True)
class IMEXPair:
    name: str
    explicit: ButcherTableau
    implicit: ButcherTableau

    def __post_init__(self):
        if self.explicit.stages != self.implicit.stages:
            raise ValueError("explicit and implicit tableaux differ in stage count")

    @property
    def stages(self) -> int:
        return self.explicit.stages

    @property
    def is_ck_type(self) -> bool:
        """Implicit part starts with an explicit stage (a_11 = 0)."""
        return self.implicit.A[0][0] == 0

    def to_dict(self) -> dict:
        return {"name": self.name, "nu": self.stages,
                "explicit": self.explicit.to_dict(), "implicit": self.implicit.to_dict()}


@dataclass
class ConditionReport:
    condition: str
    satisfied: bool = True
    worst_violation: float = 0.0
    details: list[tuple[tuple, float]] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def record(self, index: tuple, value: float, violation: float):
        """Log ``value`` at ``index``; ``violation`` <= 0 means the check holds."""
        self.details.append((index, float(value)))
        if violation > self.worst_violation:
            self.worst_violation = float(violation)

    def finish(self, tol: float) -> "ConditionReport":
        self.satisfied = self.worst_violation <= tol
        if self.satisfied:
            self.worst_violation = 0.0
        return self

    def __bool__(self):
        return self.satisfied


# -- builtin schemes ---------------------------------------------------------

_h = Fraction(1, 2)

BUILTIN = {
    "IMEX-BE(2,2,4)": IMEXPair(
        "IMEX-BE(2,2,4)",
        ButcherTableau(
            A=[[0, 0, 0, 0], [0, 0, 0, 0], [0, 1, 0, 0], [0, _h, _h, 0]],
            w=[0, _h, _h, 0]),
        ButcherTableau(
            A=[[2, 0, 0, 0], [-2, 2, 0, 0], [0, -1, 2, 0], [0, _h, Fraction(-3, 2), 2]],
            w=[0, _h, Fraction(-3, 2), 2]),
    ),
    "IMEX-BE(3,5,5)": IMEXPair(
        "IMEX-BE(3,5,5)",
        ButcherTableau(
            A=[[0, 0, 0, 0, 0],
               [1, 0, 0, 0, 0],
               [Fraction(4, 9), Fraction(2, 9), 0, 0, 0],
               [Fraction(1, 4), 0, Fraction(3, 4), 0, 0],
               [Fraction(1, 4), 0, Fraction(3, 4), 0, 0]],
            w=[Fraction(1, 4), 0, Fraction(3, 4), 0, 0]),
        ButcherTableau(
            A=[[0, 0, 0, 0, 0],
               [_h, _h, 0, 0, 0],
               [Fraction(5, 18), Fraction(-1, 9), _h, 0, 0],
               [_h, 0, 0, _h, 0],
               [Fraction(1, 4), 0, Fraction(3, 4), -_h, _h]],
            w=[Fraction(1, 4), 0, Fraction(3, 4), -_h, _h]),
    ),
    "IMEX-EULER(1,1,1)": IMEXPair(
        "IMEX-EULER(1,1,1)",
        ButcherTableau(A=[[0]], w=[1]),
        ButcherTableau(A=[[1]], w=[1]),
    ),
}


def builtin_pair(name: str) -> IMEXPair:
    try:
        return BUILTIN[name]
    except KeyError:
        raise UnknownSchemeError(
            f"unknown scheme {name!r}; available: {', '.join(sorted(BUILTIN))}") from None


def load_pair(source) -> IMEXPair:
    """Read a pair from a JSON file path or an already-parsed dict.

    Entries may be numbers, decimal strings or ``"p/q"`` strings; all are
    parsed exactly.
    """
    if isinstance(source, dict):
        doc = source
    else:
        doc = json.loads(Path(source).read_text())
    try:
        tabs = {}
        for part in ("explicit", "implicit"):
            d = doc[part]
            tabs[part] = ButcherTableau(A=d["A"], w=d["w"], c=d.get("c"))
        pair = IMEXPair(doc["name"], tabs["explicit"], tabs["implicit"])
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"malformed tableau document: {exc}") from exc
    if "nu" in doc and int(doc["nu"]) != pair.stages:
        raise ConfigError(f"nu={doc['nu']} but tableaux have {pair.stages} stages")
    return pair


def dump_pair(pair: IMEXPair, path) -> None:
    Path(path).write_text(json.dumps(pair.to_dict(), indent=2) + "\n")


# -- checks ------------------------------------------------------------------

def validate_pair(pair: IMEXPair) -> ConditionReport:
    """Row-sum consistency c = A 1 and triangularity for both tableaux."""
    rep = ConditionReport("structure")
    for label, tab, strict in (("explicit", pair.explicit, True), ("implicit", pair.implicit, False)):
        A, c = tab.A_array, tab.c_array
        rows = A.sum(axis=1)
        for i in range(tab.stages):
            rep.record((label, "c", i + 1), c[i], abs(c[i] - rows[i]))
            for j in range(i if strict else i + 1, tab.stages):
                if A[i, j] != 0:
                    rep.record((label, "A", i + 1, j + 1), A[i, j], abs(A[i, j]))
    return rep.finish(EXACT_TOL)


def is_globally_stiffly_accurate(pair: IMEXPair) -> ConditionReport:
    """Both weight vectors equal the last rows of their tableaux."""
    rep = ConditionReport("globally stiffly accurate")
    for label, tab in (("explicit", pair.explicit), ("implicit", pair.implicit)):
        last, w = tab.A_array[-1], tab.w_array
        for i in range(tab.stages):
            rep.record((label, i + 1), w[i] - last[i], abs(w[i] - last[i]))
    return rep.finish(EXACT_TOL)


def order_conditions(pair: IMEXPair, p: int) -> ConditionReport:
    """Classical order conditions of each tableau plus IMEX coupling conditions up to ``p``."""
    if p not in (1, 2, 3):
        raise UnsupportedOrderError(f"order conditions implemented for p <= 3, got {p}")
    ex, im = pair.explicit, pair.implicit
    tabs = {"E": (ex.A_array, ex.w_array, ex.c_array), "I": (im.A_array, im.w_array, im.c_array)}
    rep = ConditionReport(f"order {p}")

    def check(key, value, target):
        rep.record(key, value, abs(value - target))

    for a in "EI":
        check(("sum w", a), tabs[a][1].sum(), 1.0)
    if p >= 2:
        # w_a . c_b for all four combinations
        for a in "EI":
            for b in "EI":
                check(("w.c", a + b), tabs[a][1] @ tabs[b][2], 0.5)
    if p >= 3:
        for a in "EI":
            for b in "EI":
                for d in "EI":
                    if b <= d:
                        check(("w.(c c)", a + b + d), tabs[a][1] @ (tabs[b][2] * tabs[d][2]), 1 / 3)
                    check(("w.A.c", a + b + d), tabs[a][1] @ tabs[b][0] @ tabs[d][2], 1 / 6)
    return rep.finish(TOL)


def bhat_matrix(pair: IMEXPair, lam: float) -> np.ndarray:
    """Inverse of (lam I + A) for the implicit tableau; lower triangular."""
    A = pair.implicit.A_array
    M = lam * np.eye(pair.stages) + A
    diag = np.diag(M)
    bad = np.flatnonzero(diag == 0)
    if bad.size:
        raise SingularMatrixError(
            f"lam*I + A is singular for lam={lam:g}: zero diagonal entry at stage {bad[0] + 1}")
    # forward substitution keeps the triangular structure exact
    B = np.zeros_like(M)
    nu = pair.stages
    for col in range(nu):
        e = np.zeros(nu)
        e[col] = 1.0
        for i in range(nu):
            B[i, col] = (e[i] - M[i, :i] @ B[:i, col]) / M[i, i]
    return B


def positivity_conditions(pair: IMEXPair, lam: float) -> ConditionReport:
    """Convexity inequalities that make a homogeneous step a combination of densities.

    Three families, each required to lie in [0, 1]:
    sum_h bhat_ih c_h, sum_h bhat_ih (c_h - ctilde_h) and
    sum_{h=j+1..i} bhat_ih atilde_hj. The stiffly-accurate precondition is
    recorded in ``notes`` but does not gate the evaluation.
    """
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    B = bhat_matrix(pair, lam)
    c, ct = pair.implicit.c_array, pair.explicit.c_array
    At = pair.explicit.A_array
    rep = ConditionReport(f"positivity lam={lam:g}")
    rep.notes["gsa"] = is_globally_stiffly_accurate(pair).satisfied

    def bound(key, value):
        rep.record(key, value, max(-value, value - 1.0, 0.0))

    nu = pair.stages
    s1, s2 = B @ c, B @ (c - ct)
    for i in range(nu):
        bound(("bhat.c", i + 1), s1[i])
    for i in range(nu):
        bound(("bhat.(c-ct)", i + 1), s2[i])
    for i in range(nu):
        for j in range(i):
            bound(("bhat.At", i + 1, j + 1), B[i, j + 1:i + 1] @ At[j + 1:i + 1, j])
    return rep.finish(TOL)


def condition_rows(pair: IMEXPair, lams=(0.25, 0.5, 1.0)) -> list[ConditionReport]:
    """Every report the CLI prints for a scheme."""
    reps = [validate_pair(pair), is_globally_stiffly_accurate(pair)]
    for p in (1, 2, 3):
        reps.append(order_conditions(pair, p))
    for lam in lams:
        try:
            reps.append(positivity_conditions(pair, lam))
        except SingularMatrixError as exc:
            reps.append(ConditionReport(f"positivity lam={lam:g}", False, float("inf"),
                                        notes={"error": str(exc)}))
    return reps
