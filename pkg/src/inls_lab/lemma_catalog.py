"""Constructive exponent systems for the nonlinear estimates of the INLS theory.

Every branch builds its admissible pairs and Hoelder systems in exact
arithmetic, then checks each identity along two independent routes: the
generic Hoelder solve and the closed form the estimate relies on. Sign
conditions are recorded with their exact value so a failing report says by
how much it fails.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from scipy.optimize import brentq

from .exponent_core import (
    Q,
    INF,
    ClassKind,
    HypothesisError,
    Pair,
    PairClass,
    ParamSet,
    Rational,
    Region,
    alpha_upper,
    b_upper,
    classify_pair,
    conj,
    fmt,
    from_recip,
    plus_conjugate,
    range_window,
    rat,
    recip,
    windows_nonempty,
)

F = Q
DEFAULT_THETA_CAP = F(1, 100)


class LemmaId(enum.Enum):
    LOCAL_L2 = "LocalL2"
    LOCAL_HS_HIGHDIM = "LocalHs_HighDim"
    LOCAL_HS_LOWDIM = "LocalHs_LowDim"
    LOCAL_HS_HALFDIM = "LocalHs_HalfDim"
    GLOBAL_BASE = "GlobalBase"
    GLOBAL_DERIV_HIGHDIM = "GlobalDeriv_HighDim"
    GLOBAL_DERIV_3D = "GlobalDeriv_3D"
    GLOBAL_DERIV_1D = "GlobalDeriv_1D"
    GLOBAL_DERIV_2D = "GlobalDeriv_2D"
    GLOBAL_DERIV_HALFDIM = "GlobalDeriv_HalfDim"

    @property
    def cli_name(self) -> str:
        return _CLI_NAMES[self]

    @property
    def is_global(self) -> bool:
        return self.value.startswith("Global")


_CLI_NAMES = {
    LemmaId.LOCAL_L2: "local-l2",
    LemmaId.LOCAL_HS_HIGHDIM: "local-hs-highdim",
    LemmaId.LOCAL_HS_LOWDIM: "local-hs-lowdim",
    LemmaId.LOCAL_HS_HALFDIM: "local-hs-halfdim",
    LemmaId.GLOBAL_BASE: "global-base",
    LemmaId.GLOBAL_DERIV_HIGHDIM: "global-deriv-highdim",
    LemmaId.GLOBAL_DERIV_3D: "global-deriv-3d",
    LemmaId.GLOBAL_DERIV_1D: "global-deriv-1d",
    LemmaId.GLOBAL_DERIV_2D: "global-deriv-2d",
    LemmaId.GLOBAL_DERIV_HALFDIM: "global-deriv-halfdim",
}

LOCAL_HS_BRANCHES = (LemmaId.LOCAL_HS_HIGHDIM, LemmaId.LOCAL_HS_LOWDIM, LemmaId.LOCAL_HS_HALFDIM)
GLOBAL_DERIV_BRANCHES = (
    LemmaId.GLOBAL_DERIV_HIGHDIM,
    LemmaId.GLOBAL_DERIV_3D,
    LemmaId.GLOBAL_DERIV_1D,
    LemmaId.GLOBAL_DERIV_2D,
    LemmaId.GLOBAL_DERIV_HALFDIM,
)


# ---------------------------------------------------------------------------
# report records


@dataclass(frozen=True)
class PairRecord:
    name: str
    pair: Pair
    claimed: PairClass
    found: PairClass = field(compare=False)

    @property
    def verified(self) -> bool:
        return self.found == self.claimed

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "q": fmt(self.pair.q),
            "r": fmt(self.pair.r),
            "claimed_class": str(self.claimed),
            "verified": self.verified,
        }


@dataclass(frozen=True)
class Identity:
    name: str
    lhs: Q
    rhs: Q

    @property
    def passed(self) -> bool:
        return self.lhs == self.rhs

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": fmt(self.lhs), "rhs": fmt(self.rhs), "pass": self.passed}


_RELATIONS: dict[str, Callable[[Q], bool]] = {
    ">0": lambda v: v > 0,
    "<0": lambda v: v < 0,
    ">=0": lambda v: v >= 0,
}


@dataclass(frozen=True)
class SignCondition:
    expr: str
    value: Q
    relation: str

    @property
    def passed(self) -> bool:
        return _RELATIONS[self.relation](self.value)

    def to_dict(self) -> dict:
        return {"expr": self.expr, "relation": self.relation, "value": fmt(self.value), "pass": self.passed}


@dataclass
class ExponentSystem:
    """Named exponents of one Hoelder splitting, tagged by region."""

    name: str
    region: Optional[Region]
    values: dict[str, Rational]
    choices: dict[str, str] = field(default_factory=dict)
    implementation_chosen: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "region": None if self.region is None else self.region.value,
            "values": {k: fmt(v) for k, v in self.values.items()},
            "choices": dict(self.choices),
            "implementation_chosen": list(self.implementation_chosen),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExponentSystem":
        return cls(
            name=data["name"],
            region=None if data["region"] is None else Region(data["region"]),
            values={k: rat(v) for k, v in data["values"].items()},
            choices=dict(data["choices"]),
            implementation_chosen=tuple(data["implementation_chosen"]),
        )


@dataclass
class LemmaReport:
    lemma: LemmaId
    params: ParamSet
    pairs: list[PairRecord]
    systems: list[ExponentSystem]
    identities: list[Identity]
    signs: list[SignCondition]
    theta_exponents: Optional[tuple[Q, Q]]
    active_terms: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (
            all(p.verified for p in self.pairs)
            and all(i.passed for i in self.identities)
            and all(s.passed for s in self.signs)
        )

    def failures(self) -> list[str]:
        out = [f"pair {p.name}: claimed {p.claimed}, found {p.found}" for p in self.pairs if not p.verified]
        out += [f"identity {i.name}: {fmt(i.lhs)} != {fmt(i.rhs)}" for i in self.identities if not i.passed]
        out += [f"sign {s.expr} {s.relation} fails at {fmt(s.value)}" for s in self.signs if not s.passed]
        return out

    def pair(self, name: str) -> Pair:
        for record in self.pairs:
            if record.name == name:
                return record.pair
        raise KeyError(name)

    def system(self, name: str) -> ExponentSystem:
        for system in self.systems:
            if system.name == name:
                return system
        raise KeyError(name)

    def to_dict(self) -> dict:
        theta = {"t1": None, "t2": None}
        if self.theta_exponents is not None:
            theta = {"t1": fmt(self.theta_exponents[0]), "t2": fmt(self.theta_exponents[1])}
        return {
            "lemma": self.lemma.value,
            "pass": self.passed,
            "params": self.params.to_dict(),
            "pairs": [p.to_dict() for p in self.pairs],
            "systems": [s.to_dict() for s in self.systems],
            "identities": [i.to_dict() for i in self.identities],
            "signs": [s.to_dict() for s in self.signs],
            "theta": theta,
            "active_terms": list(self.active_terms),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "LemmaReport":
        """Rebuild a report and re-derive every pass flag from the exact values.

        Raises ValueError if a stored flag disagrees with the re-derivation.
        """
        params = ParamSet.from_dict(data["params"])
        eps = params.eps
        s_c = params.s_c
        pairs = []
        for item in data["pairs"]:
            pair = Pair(item["q"], item["r"])
            claimed = parse_pair_class(item["claimed_class"])
            found = _classify_for(claimed, pair, params.N, s_c, eps)
            record = PairRecord(item["name"], pair, claimed, found)
            if record.verified != item["verified"]:
                raise ValueError(f"stored verdict for pair {item['name']} does not re-validate")
            pairs.append(record)
        identities = [Identity(i["name"], rat(i["lhs"]), rat(i["rhs"])) for i in data["identities"]]
        signs = [SignCondition(s["expr"], rat(s["value"]), s["relation"]) for s in data["signs"]]
        for stored, rebuilt in zip(data["identities"] + data["signs"], identities + signs):
            if stored["pass"] != rebuilt.passed:
                raise ValueError(f"stored flag for {stored.get('name', stored.get('expr'))} does not re-validate")
        theta = data["theta"]
        exps = None if theta["t1"] is None else (rat(theta["t1"]), rat(theta["t2"]))
        report = cls(
            lemma=LemmaId(data["lemma"]),
            params=params,
            pairs=pairs,
            systems=[ExponentSystem.from_dict(s) for s in data["systems"]],
            identities=identities,
            signs=signs,
            theta_exponents=exps,
            active_terms=list(data["active_terms"]),
            notes=list(data["notes"]),
        )
        if report.passed != data["pass"]:
            raise ValueError("stored overall verdict does not re-validate")
        return report

    @classmethod
    def from_json(cls, text: str) -> "LemmaReport":
        return cls.from_dict(json.loads(text))


def parse_pair_class(text: str) -> PairClass:
    if text == "L2Admissible":
        return PairClass.l2()
    for kind in (ClassKind.HS_DUAL, ClassKind.HS):
        prefix = kind.value + "("
        if text.startswith(prefix) and text.endswith(")"):
            return PairClass(kind, rat(text[len(prefix):-1]))
    if text.startswith("NotAdmissible"):
        return PairClass.not_admissible(text[len("NotAdmissible("):-1])
    raise ValueError(f"unknown pair class {text!r}")


def _classify_for(claimed: PairClass, pair: Pair, N: int, s_c: Q, eps: Q) -> PairClass:
    # L2 claims are checked at regularity 0, Hs claims at the claimed regularity.
    s = Q(0) if claimed.kind in (ClassKind.L2, ClassKind.NONE) else claimed.s
    return classify_pair(pair, N, s, eps)


# ---------------------------------------------------------------------------
# report builder


class _Builder:
    def __init__(self, lemma: LemmaId, params: ParamSet, strict: bool, eps: Q):
        self.lemma = lemma
        self.params = params
        self.strict = strict
        self.eps = eps
        self.pairs: list[PairRecord] = []
        self.systems: list[ExponentSystem] = []
        self.identities: list[Identity] = []
        self.signs: list[SignCondition] = []
        self.terms: list[str] = []
        self.notes: list[str] = []

    def require(self, expr: str, margin: Q, relation: str = ">0") -> None:
        """A lemma hypothesis, expressed as a signed margin."""
        cond = SignCondition(f"hypothesis: {expr}", margin, relation)
        if not cond.passed and self.strict:
            raise HypothesisError(f"hypothesis violated: {expr} (margin {fmt(margin)})")
        self.signs.append(cond)

    def pair(self, name: str, q, r, claimed: PairClass) -> Pair:
        pair = Pair(q, r)
        found = _classify_for(claimed, pair, self.params.N, self.params.s_c, self.eps)
        self.pairs.append(PairRecord(name, pair, claimed, found))
        return pair

    def identity(self, name: str, lhs, rhs) -> None:
        self.identities.append(Identity(name, rat(lhs), rat(rhs)))

    def sign(self, expr: str, value, relation: str = ">0") -> None:
        self.signs.append(SignCondition(expr, rat(value), relation))

    def system(self, name: str, region: Optional[Region], recips: dict[str, Q],
               choices: Optional[dict[str, str]] = None, chosen: tuple[str, ...] = (),
               outer: tuple[str, ...] = ()) -> ExponentSystem:
        """Record a system given by reciprocals; every reciprocal must be >= 0.

        Symbols listed in ``outer`` are Hoelder exponents of whole factors and
        must additionally be at least 1.
        """
        for symbol, value in recips.items():
            self.sign(f"{name}: 1/{symbol} >= 0", value, ">=0")
        for symbol in outer:
            self.sign(f"{name}: 1 - 1/{symbol} >= 0", 1 - recips[symbol], ">=0")
        values = {k: from_recip(v) if v > 0 else (INF if v == 0 else Q(1) / v) for k, v in recips.items()}
        system = ExponentSystem(name, region, values, dict(choices or {}), tuple(chosen))
        self.systems.append(system)
        return system

    def weight(self, name: str, N: int, recip_gamma: Q, b_eff: Q, region: Region) -> None:
        margin = N * recip_gamma - b_eff
        self.sign(f"{name}: N/gamma - b_eff", margin, ">0" if region is Region.BALL else "<0")

    def build(self, theta: Optional[tuple[Q, Q]]) -> LemmaReport:
        return LemmaReport(self.lemma, self.params, self.pairs, self.systems, self.identities,
                           self.signs, theta, self.terms, self.notes)


def _midpoint(lo: Q, hi: Q, what: str) -> Q:
    if not lo < hi:
        raise HypothesisError(f"empty choice interval for {what}: ({fmt(lo)}, {fmt(hi)})")
    return (lo + hi) / 2


def _interval_note(var: str, lo: Q, hi: Q, hi_closed: bool = False) -> str:
    return f"{var} in ({fmt(lo)}, {fmt(hi)}{']' if hi_closed else ')'}, midpoint"


# ---------------------------------------------------------------------------
# local theory


def local_l2_system(params: ParamSet, strict: bool = True) -> LemmaReport:
    """Weighted estimate in S'(L2) for the L2-subcritical power range."""
    N, a, b = params.N, params.alpha, params.b
    B = _Builder(LemmaId.LOCAL_L2, params, strict, params.eps)
    B.require("alpha < (4-2b)/N", (4 - 2 * b) / N - a)
    B.require("b < min(2, N)", min(F(2), F(N)) - b)

    r = (4 - 2 * b + 2 * N) / F(N - b)
    q = (4 - 2 * b + 2 * N) / F(N)
    B.pair("(q,r)", q, r, PairClass.l2())
    inv_r1 = a / r
    inv_gamma = 1 - 1 / r - inv_r1 - 1 / r
    inv_q2 = a / q
    inv_q1 = 1 - 1 / q - inv_q2 - 1 / q
    B.system("ball", Region.BALL, {"gamma": inv_gamma, "r1": inv_r1, "q1": inv_q1, "q2": inv_q2}, outer=("gamma",))
    B.identity("ball: N/gamma = N - N(alpha+2)/r", N * inv_gamma, N - N * (a + 2) / r)
    B.identity("ball: 1/q1 closed form", inv_q1, (4 - 2 * b - a * N) / (4 - 2 * b + 2 * N))
    B.identity("ball: r = alpha*r1", r, a / inv_r1)
    B.weight("ball", N, inv_gamma, b, Region.BALL)

    # exterior region: unweighted bookkeeping with the classical pair
    qk = F(4) * (a + 2) / (N * a)
    rk = a + 2
    B.pair("(q_ext,r_ext)", qk, rk, PairClass.l2())
    inv_r1k = a / rk
    inv_gk = 1 - 2 / rk - inv_r1k
    inv_q1k = 1 - (a + 2) / qk
    B.system("exterior", Region.BALL_COMPLEMENT, {"gamma": inv_gk, "r1": inv_r1k, "q1": inv_q1k},
             chosen=("q1", "r1", "gamma"))
    B.identity("exterior: gamma = inf", inv_gk, 0)
    B.identity("exterior: 1/q1 = 1 - N*alpha/4", inv_q1k, 1 - N * a / 4)
    B.weight("exterior", N, inv_gk, b, Region.BALL_COMPLEMENT)
    B.notes.append("exterior exponent theta1 uses the unweighted pair (4(alpha+2)/(N alpha), alpha+2)")

    theta1, theta2 = inv_q1k, inv_q1
    B.sign("theta1 > 0", theta1)
    B.sign("theta2 > 0", theta2)
    return B.build((theta1, theta2))


def _local_hs_hypotheses(B: _Builder, p: ParamSet) -> None:
    N, a, b, s = p.N, p.alpha, p.b, p.s
    B.require("b < b_upper(N)", b_upper(N) - b)
    B.require("s > 0", s)
    B.require("s <= min(N/2, 1)", min(F(N, 2), F(1)) - s, ">=0")
    if s <= F(N, 2):
        upper = alpha_upper(N, s, b)
        if upper is not INF:
            B.require(f"alpha < alpha_upper(N, s, b) = {fmt(upper)}", upper - a)


def _local_exterior(B: _Builder, p: ParamSet) -> Q:
    """Exterior system shared by the N>=3 and N=1,2 branches; returns theta1."""
    N, a, b, s = p.N, p.alpha, p.b, p.s
    q0 = F(4) * (a + 2) / (a * (N - 2 * s))
    r0 = F(N) * (a + 2) / (N + a * s)
    B.pair("(q0,r0)", q0, r0, PairClass.l2())
    B.sign("exterior: N/r0 - s > 0", N / r0 - s)
    inv_r1 = a * (N / r0 - s) / N
    inv_gamma = 1 - 2 / r0 - inv_r1
    inv_e = (a + 1) * (N / r0 - s) / N
    inv_d = 1 - 1 / r0 - inv_e
    inv_q2 = a / q0
    inv_q1 = 1 - 2 / q0 - inv_q2
    B.system("exterior", Region.BALL_COMPLEMENT,
             {"gamma": inv_gamma, "r1": inv_r1, "d": inv_d, "e": inv_e, "q1": inv_q1, "q2": inv_q2},
             outer=("gamma", "d"))
    B.identity("exterior: N/gamma = N - 2N/r0 - N alpha/r0 + alpha s", N * inv_gamma, N - 2 * N / r0 - N * a / r0 + a * s)
    B.identity("exterior: N/gamma = 0", N * inv_gamma, 0)
    B.identity("exterior: N/d = N - 2N/r0 - alpha N/r0 + alpha s + s", N * inv_d, N - 2 * N / r0 - a * N / r0 + a * s + s)
    B.identity("exterior: 1/q1 = (4 - alpha(N-2s))/4", inv_q1, (4 - a * (N - 2 * s)) / 4)
    B.identity("exterior: 1/q0' = 1/q1 + (alpha+1)/q0", 1 - 1 / q0, inv_q1 + (a + 1) / q0)
    B.weight("exterior", N, inv_gamma, b, Region.BALL_COMPLEMENT)
    B.weight("exterior (derivative of weight)", N, inv_d, b + s, Region.BALL_COMPLEMENT)
    return inv_q1


def _local_hs_highdim(B: _Builder, p: ParamSet) -> tuple[Q, Q]:
    N, a, b, s = p.N, p.alpha, p.b, p.s
    theta1 = _local_exterior(B, p)
    r = F(2 * N) * (N - b + 2 * (1 - s)) / (N * (N - 2 * s) + 4 * s - b * N)
    q = F(2) * (N - b + 2 * (1 - s)) / (N - 2 * s)
    B.pair("(q,r)", q, r, PairClass.l2())
    B.sign("ball: N/r - s > 0", N / r - s)
    inv_r1 = a * (N / r - s) / N
    inv_gamma = 1 - 2 / r - inv_r1
    inv_e = (a + 1) * (N / r - s) / N
    inv_d = 1 - 1 / r - inv_e
    inv_q2 = a / q
    inv_q1 = 1 - 2 / q - inv_q2
    B.system("ball", Region.BALL,
             {"gamma": inv_gamma, "r1": inv_r1, "d": inv_d, "e": inv_e, "q1": inv_q1, "q2": inv_q2},
             outer=("gamma", "d"))
    B.identity("ball: N/gamma = N - 2N/r - N alpha/r + alpha s", N * inv_gamma, N - 2 * N / r - N * a / r + a * s)
    B.identity("ball: N/d = N/gamma + s", N * inv_d, N - 2 * N / r - a * N / r + a * s + s)
    B.identity("ball: 1/q1 closed form", inv_q1, (4 - 2 * b - a * (N - 2 * s)) / (2 * (N - b + 2 - 2 * s)))
    B.identity("ball: 1/q' = 1/q1 + (alpha+1)/q", 1 - 1 / q, inv_q1 + (a + 1) / q)
    B.weight("ball", N, inv_gamma, b, Region.BALL)
    B.weight("ball (derivative of weight)", N, inv_d, b + s, Region.BALL)
    return theta1, inv_q1


def _local_hs_lowdim(B: _Builder, p: ParamSet) -> tuple[Q, Q]:
    N, a, b, s = p.N, p.alpha, p.b, p.s
    theta1 = _local_exterior(B, p)
    qbar, rbar = F(8) / (2 * N - s), F(4 * N) / s
    B.pair("(qbar,rbar)", qbar, rbar, PairClass.l2())
    r = F(4 * N) * (N - 2 * s + 4 - 2 * b) / (4 * s * (4 - 2 * b) + (N - 2 * s) * (4 * N - 4 * b - s))
    q = F(8) * (N - 2 * s + 4 - 2 * b) / ((8 - 2 * N + s) * (N - 2 * s))
    B.pair("(q,r)", q, r, PairClass.l2())
    B.sign("ball: N/r - s > 0", N / r - s)
    B.sign("ball: 4N - 4b - 5s > 0", 4 * N - 4 * b - 5 * s)
    inv_r1 = a * (N / r - s) / N
    inv_gamma = 1 - 1 / rbar - inv_r1 - 1 / r
    inv_e = (a + 1) * (N / r - s) / N
    inv_d = 1 - 1 / rbar - inv_e
    inv_q2 = a / q
    inv_q1 = 1 - 1 / qbar - inv_q2 - 1 / q
    B.system("ball", Region.BALL,
             {"gamma": inv_gamma, "r1": inv_r1, "d": inv_d, "e": inv_e, "q1": inv_q1, "q2": inv_q2},
             outer=("gamma", "d"))
    B.identity("ball: N/gamma = (4(N-b)-s)/4 - N/r - alpha(N-sr)/r + b", N * inv_gamma,
               (4 * (N - b) - s) / 4 - N / r - a * (N - s * r) / r + b)
    B.identity("ball: 1/q1 = (8-2N+s)/8 - (alpha+1)/q", inv_q1, (8 - 2 * N + s) / 8 - (a + 1) / q)
    B.identity("ball: 1/q1 closed form", inv_q1,
               ((8 - 2 * N + s) / F(8)) * ((4 - 2 * b - a * (N - 2 * s)) / (N - 2 * s + 4 - 2 * b)))
    B.identity("ball: N/d = N - N/rbar - (alpha+1)N/r + alpha s + s", N * inv_d,
               N - N / rbar - (a + 1) * N / r + a * s + s)
    B.weight("ball", N, inv_gamma, b, Region.BALL)
    B.weight("ball (derivative of weight)", N, inv_d, b + s, Region.BALL)
    return theta1, inv_q1


def _local_hs_halfdim(B: _Builder, p: ParamSet) -> tuple[Q, Q]:
    N, a, b, s = p.N, p.alpha, p.b, p.s
    # (i): weight times |u|^alpha v with v in L2
    r = F(N) * (a + 2) / (N - 2 * b)
    q = F(4) * (a + 2) / (N * a + 4 * b)
    B.pair("(q,r)", q, r, PairClass.l2())
    L = F(2 * N) * (a + 2) / (N - 2 * b)
    x_ball = _midpoint(F(0), 1 / L, "1/(alpha r1) on the ball")
    inv_r1 = a * x_ball
    inv_gamma = F(1, 2) - 1 / r - inv_r1
    B.system("ball (i)", Region.BALL, {"gamma": inv_gamma, "r1": inv_r1},
             choices={"alpha*r1": _interval_note("1/(alpha r1)", F(0), 1 / L)}, outer=("gamma",))
    B.identity("ball (i): N/gamma - b = alpha(N-2b)/(2(alpha+2)) - N/r1", N * inv_gamma - b,
               a * (N - 2 * b) / (2 * (a + 2)) - N * inv_r1)
    B.weight("ball (i)", N, inv_gamma, b, Region.BALL)
    B.sign("ball (i): alpha*r1 >= 2", 1 - 2 * x_ball, ">=0")

    hi = min(F(1, 2), (N * a + 4 * b) / (2 * N * a * (a + 2)))
    x_ext = _midpoint(1 / L, hi, "1/(alpha r1) on the exterior")
    inv_r1 = a * x_ext
    inv_gamma = F(1, 2) - 1 / r - inv_r1
    B.system("exterior (i)", Region.BALL_COMPLEMENT, {"gamma": inv_gamma, "r1": inv_r1},
             choices={"alpha*r1": _interval_note("1/(alpha r1)", 1 / L, hi, hi_closed=True)}, outer=("gamma",))
    B.identity("exterior (i): N/gamma - b = alpha(N-2b)/(2(alpha+2)) - N/r1", N * inv_gamma - b,
               a * (N - 2 * b) / (2 * (a + 2)) - N * inv_r1)
    B.weight("exterior (i)", N, inv_gamma, b, Region.BALL_COMPLEMENT)
    B.sign("exterior (i): alpha*r1 > 2", 1 - 2 * x_ext)
    theta1 = 1 - 1 / q
    B.identity("theta1 = 1/q' closed form", theta1, (4 * a + 8 - N * a - 4 * b) / (4 * (a + 2)))

    # (ii): derivative estimate
    r = F(N) * (a + 2) / (N - b - s)
    q = F(4) * (a + 2) / (a * N + 2 * b + 2 * s)
    B.pair("(q2,r2)", q, r, PairClass.l2())
    L2 = F(2 * N) * (a + 2) / ((a + 1) * (N - 2 * b))
    base = (a + 1) * (N - 2 * b) / (2 * (a + 2))
    hi_r1 = min(1 / L2, a / 2)
    hi_e = min(1 / L2, (a + 1) / 2)
    inv_r1 = _midpoint(F(0), hi_r1, "1/r1 on the ball")
    inv_e = _midpoint(F(0), hi_e, "1/e on the ball")
    inv_gamma = F(1, 2) - 1 / r - inv_r1
    inv_d = 1 - 1 / r - inv_e
    B.system("ball (ii)", Region.BALL, {"gamma": inv_gamma, "r1": inv_r1, "d": inv_d, "e": inv_e},
             choices={"r1": _interval_note("1/r1", F(0), hi_r1), "e": _interval_note("1/e", F(0), hi_e)},
             outer=("gamma", "d"))
    B.identity("ball (ii): N/gamma = N/2 - N/r - N/r1", N * inv_gamma, F(N, 2) - N / r - N * inv_r1)
    B.identity("ball (ii): N/d = N - N/r - N/e", N * inv_d, N - N / r - N * inv_e)
    B.identity("ball (ii): N/gamma - b closed form", N * inv_gamma - b, base - N * inv_r1)
    B.identity("ball (ii): N/d - b - s closed form", N * inv_d - b - s, base - N * inv_e)
    B.weight("ball (ii)", N, inv_gamma, b, Region.BALL)
    B.weight("ball (ii) (derivative of weight)", N, inv_d, b + s, Region.BALL)
    B.sign("ball (ii): alpha*r1 >= 2", 1 - 2 * inv_r1 / a, ">=0")
    B.sign("ball (ii): (alpha+1)*e >= 2", 1 - 2 * inv_e / (a + 1), ">=0")
    theta2 = 1 - 1 / q

    lo_r1, top_r1 = 1 / L2, min(a / 2, F(1, 2) - 1 / r)
    lo_e, top_e = 1 / L2, min((a + 1) / 2, 1 - 1 / r)
    if lo_r1 < top_r1:
        inv_r1 = (lo_r1 + top_r1) / 2
        inv_e = _midpoint(lo_e, top_e, "1/e on the exterior")
        inv_gamma = F(1, 2) - 1 / r - inv_r1
        inv_d = 1 - 1 / r - inv_e
        B.system("exterior (ii)", Region.BALL_COMPLEMENT, {"gamma": inv_gamma, "r1": inv_r1, "d": inv_d, "e": inv_e},
                 choices={"r1": _interval_note("1/r1", lo_r1, top_r1, True),
                          "e": _interval_note("1/e", lo_e, top_e, True)},
                 outer=("gamma", "d"))
        B.identity("exterior (ii): N/gamma - b closed form", N * inv_gamma - b, base - N * inv_r1)
        B.identity("exterior (ii): N/d - b - s closed form", N * inv_d - b - s, base - N * inv_e)
    else:
        # The weighted exterior interval for r1 is empty for small alpha; use an
        # unweighted L2 pair with gamma = d = inf instead.
        m = min(a, F(1))
        inv_re = F(1, 2) - m / 4
        re, qe = 1 / inv_re, F(8) / (N * m)
        B.pair("(q_ext,r_ext)", qe, re, PairClass.l2())
        inv_r1 = F(1, 2) - inv_re
        inv_e = 1 - inv_re
        inv_gamma = F(1, 2) - inv_re - inv_r1
        inv_d = 1 - inv_re - inv_e
        B.system("exterior (ii)", Region.BALL_COMPLEMENT, {"gamma": inv_gamma, "r1": inv_r1, "d": inv_d, "e": inv_e},
                 chosen=("r_ext", "q_ext", "r1", "e"), outer=("gamma", "d"))
        B.identity("exterior (ii): gamma = inf", inv_gamma, 0)
        B.identity("exterior (ii): d = inf", inv_d, 0)
        B.sign("exterior (ii): (alpha+1)*e >= 2", 1 - 2 * inv_e / (a + 1), ">=0")
        theta_ext = 1 - 1 / qe
        B.identity("exterior (ii): time exponent 1 - N m/8", theta_ext, 1 - N * m / 8)
        theta2 = min(theta2, theta_ext)
        B.notes.append("exterior (ii) uses the unweighted fallback pair: the weighted interval for 1/r1 is empty")
    B.weight("exterior (ii)", N, inv_gamma, b, Region.BALL_COMPLEMENT)
    B.weight("exterior (ii) (derivative of weight)", N, inv_d, b + s, Region.BALL_COMPLEMENT)
    B.sign("exterior (ii): alpha*r1 > 2", 1 - 2 * inv_r1 / a)
    return theta1, theta2


def local_hs_branch(N: int, s) -> LemmaId:
    s = rat(s)
    if s < F(N, 2):
        return LemmaId.LOCAL_HS_HIGHDIM if N >= 3 else LemmaId.LOCAL_HS_LOWDIM
    return LemmaId.LOCAL_HS_HALFDIM


def local_hs_system(params: ParamSet, strict: bool = True, branch: Optional[LemmaId] = None) -> LemmaReport:
    """H^s estimates of the local theory; dispatches on (N, s)."""
    expected = local_hs_branch(params.N, params.s) if params.s <= F(params.N, 2) else None
    lemma = branch or expected
    if lemma is None:
        raise HypothesisError("regularity above N/2 unsupported")
    if branch is not None and branch != expected:
        raise HypothesisError(f"wrong dimension branch: {branch.value} does not cover N={params.N}, s={fmt(params.s)}")
    B = _Builder(lemma, params, strict, params.eps)
    _local_hs_hypotheses(B, params)
    build = {
        LemmaId.LOCAL_HS_HIGHDIM: _local_hs_highdim,
        LemmaId.LOCAL_HS_LOWDIM: _local_hs_lowdim,
        LemmaId.LOCAL_HS_HALFDIM: _local_hs_halfdim,
    }[lemma]
    theta1, theta2 = build(B, params)
    B.sign("theta1 > 0", theta1)
    B.sign("theta2 > 0", theta2)
    return B.build((theta1, theta2))


# ---------------------------------------------------------------------------
# global theory: theta constraints
#
# Each constraint is a polynomial of degree <= 2 in theta, positive (or
# nonnegative) exactly where the corresponding denominator, window or
# integrability requirement holds.

Constraint = tuple[str, Callable[[Q], Q], bool, int]  # (name, g, strict, degree)


def _window_constraints(name: str, num: Callable, den: Callable, kind: ClassKind, N: int, s, eps,
                        degree: int = 1) -> list[Constraint]:
    """Constraints placing num/den (den > 0) inside the eps-shrunk window."""
    window = range_window(kind, N, s, eps)
    if window is None:
        raise HypothesisError(f"{kind.value} window undefined for N={N}, s={fmt(rat(s))}")
    lo, hi = window.lo, window.hi
    out: list[Constraint] = [(f"{name} >= {fmt(lo)} ({kind.value})", lambda t: num(t) - lo * den(t), False, degree)]
    if hi is not INF:
        out.append((f"{name} <= {fmt(hi)} ({kind.value})", lambda t: hi * den(t) - num(t), window.hi_open, degree))
    return out


def _base_constraints(p: ParamSet, eps: Q) -> list[Constraint]:
    N, a, b = p.N, p.alpha, p.b
    sc = p.s_c
    num_r = lambda t: N * a * (a + 2 - t)
    den_r = lambda t: a * (N - b) - t * (2 - b)
    out: list[Constraint] = [
        ("theta < alpha", lambda t: a - t, True, 1),
        ("denominator of q_hat", lambda t: a * (N * a + 2 * b) - t * (N * a - 4 + 2 * b), True, 1),
        ("denominator of r_hat", den_r, True, 1),
        ("denominator of a_tilde", lambda t: a * (N * (a + 1 - t) - 2 + 2 * b) - (4 - 2 * b) * (1 - t), True, 1),
        ("denominator of a_hat", lambda t: 4 - 2 * b - (N - 2) * a, True, 1),
    ]
    out += _window_constraints("r_hat", num_r, den_r, ClassKind.L2, N, 0, eps)
    out += _window_constraints("r_hat", num_r, den_r, ClassKind.HS, N, sc, eps)
    out += _window_constraints("r_hat", num_r, den_r, ClassKind.HS_DUAL, N, sc, eps)
    return out


def _highdim_constraints(p: ParamSet, eps: Q) -> list[Constraint]:
    N, a, b, s = p.N, p.alpha, p.b, p.s
    sc = p.s_c
    return [
        ("s < N/r_hat", lambda t: a * (N - b) - t * (2 - b) - s * a * (a + 2 - t), True, 1),
        ("exterior: N/d >= 0 at theta*r1 = 2", lambda t: b + s - t * sc, False, 1),
    ]


def _one_d_constraints(p: ParamSet, eps: Q) -> list[Constraint]:
    a, b = p.alpha, p.b
    sc = p.s_c
    den_r0 = lambda t: a * (1 - 2 * b) - t * (4 - 2 * b)
    num_p = lambda t: 2 * (a + 1 - t)
    one = lambda t: F(1)
    out: list[Constraint] = [
        ("denominator of r0", den_r0, True, 1),
        ("denominator of k*", lambda t: (4 - 2 * b) * (a - t + 1) - a, True, 1),
        ("exterior: 1/gamma >= 0 at theta*r1 = 2", lambda t: b - t * sc, False, 1),
    ]
    out += _window_constraints("r0", lambda t: 2 * a, den_r0, ClassKind.L2, 1, 0, eps)
    out += _window_constraints("p*", num_p, one, ClassKind.L2, 1, 0, eps)
    out += _window_constraints("p*", num_p, one, ClassKind.HS, 1, sc, eps)
    return out


def _two_d_constraints(p: ParamSet, eps: Q) -> list[Constraint]:
    a, b = p.alpha, p.b
    sc = p.s_c
    den_r = lambda t: a * (1 - b - 2 * eps * (a - t)) - t * (2 - b)
    num_p = lambda t: 2 * (a + 1 - t)
    den_p = lambda t: 1 + 2 * eps * (a - t)
    out: list[Constraint] = [
        ("denominator of r_tilde", den_r, True, 1),
        ("denominator of k0", lambda t: a * (1 - b - 2 * eps * (a - t)) + (2 - b) * (1 - t), True, 1),
        ("denominator of l0", lambda t: (a - t) * (1 - 2 * eps), True, 1),
        ("exterior: 2/gamma >= 0 at theta*r1 = 2", lambda t: b - t * sc, False, 1),
    ]
    out += _window_constraints("r_tilde", lambda t: 2 * a, den_r, ClassKind.L2, 2, 0, eps)
    out += _window_constraints("p0", num_p, den_p, ClassKind.L2, 2, 0, eps)
    out += _window_constraints("p0", num_p, den_p, ClassKind.HS, 2, sc, eps)
    return out


def _halfdim_constraints(p: ParamSet, eps: Q) -> list[Constraint]:
    N, a = p.N, p.alpha
    sc = p.s_c
    num_r = lambda t: 2 * N * (a + 1 - t)
    den_r = lambda t: N * (a + 1 - t) - 2 * sc * (a - t) - 4
    num_p = lambda t: 2 * N * (a + 1 - t) ** 2
    den_p = lambda t: (N - 2 * sc) * (a + 1 - t) ** 2 - 4 * (a - t) * (1 - sc) + 2 * sc
    out: list[Constraint] = [
        ("denominator of r_bar", den_r, True, 1),
        ("denominator of k_bar", lambda t: 2 * (a - t) * (1 - sc) - sc, True, 1),
        ("denominator of l_bar", lambda t: 2 * (a - t) * (1 - sc) + sc * ((a + 1 - t) ** 2 - 1), True, 2),
        ("denominator of p_bar", den_p, True, 2),
    ]
    out += _window_constraints("r_bar", num_r, den_r, ClassKind.L2, N, 0, eps)
    out += _window_constraints("r_bar", num_r, den_r, ClassKind.HS, N, sc, eps)
    out += _window_constraints("p_bar", num_p, den_p, ClassKind.L2, N, 0, eps, degree=2)
    out += _window_constraints("p_bar", num_p, den_p, ClassKind.HS, N, sc, eps, degree=2)
    return out


_BRANCH_CONSTRAINTS = {
    LemmaId.GLOBAL_DERIV_HIGHDIM: _highdim_constraints,
    LemmaId.GLOBAL_DERIV_1D: _one_d_constraints,
    LemmaId.GLOBAL_DERIV_2D: _two_d_constraints,
    LemmaId.GLOBAL_DERIV_HALFDIM: _halfdim_constraints,
}


def global_deriv_branch(N: int, s) -> LemmaId:
    s = rat(s)
    if N >= 4:
        return LemmaId.GLOBAL_DERIV_HIGHDIM
    if N == 3:
        return LemmaId.GLOBAL_DERIV_3D
    if s == F(N, 2):
        return LemmaId.GLOBAL_DERIV_HALFDIM
    return LemmaId.GLOBAL_DERIV_1D if N == 1 else LemmaId.GLOBAL_DERIV_2D


def theta_constraints(p: ParamSet, lemma: LemmaId, eps: Q) -> list[Constraint]:
    out = _base_constraints(p, eps)
    if lemma in _BRANCH_CONSTRAINTS:
        out += _BRANCH_CONSTRAINTS[lemma](p, eps)
    return out


def _coefficients(g: Callable[[Q], Q], degree: int) -> tuple[Q, Q, Q]:
    """(a2, a1, c) of g(t) = a2 t^2 + a1 t + c, read off from degree+1 samples."""
    c = rat(g(F(0)))
    g1 = rat(g(F(1)))
    if degree == 1:
        return F(0), g1 - c, c
    g2 = rat(g(F(2)))
    a2 = (g2 - 2 * g1 + c) / 2
    return a2, g1 - c - a2, c


_SQRT_SCALE = 10**30


def _sqrt_bounds(x: Q) -> tuple[Q, Q]:
    """Rational lo <= sqrt(x) <= hi, equal when x is a perfect square."""
    num, den = x.numerator, x.denominator
    m = num * den * _SQRT_SCALE**2
    root = math.isqrt(m)
    scale = den * _SQRT_SCALE
    if root * root == m:
        return F(root, scale), F(root, scale)
    return F(root, scale), F(root + 1, scale)


def _first_positive_root(a2: Q, a1: Q, c: Q) -> Optional[Q]:
    """Rational lower bound for the smallest positive root of a2 t^2 + a1 t + c, c > 0."""
    if a2 == 0:
        return -c / a1 if a1 < 0 else None
    disc = a1 * a1 - 4 * a2 * c
    if disc < 0:
        return None
    lo, hi = _sqrt_bounds(disc)
    best = None
    for sign in (1, -1):
        # root = (-a1 + sign*sqrt(disc)) / (2 a2); pick the bound that keeps it low
        increasing = (sign > 0) == (a2 > 0)
        rt_low = (-a1 + sign * (lo if increasing else hi)) / (2 * a2)
        rt_high = (-a1 + sign * (hi if increasing else lo)) / (2 * a2)
        if rt_high <= 0:
            continue
        rt_low = max(rt_low, F(0))
        best = rt_low if best is None else min(best, rt_low)
    return best


def theta_window(params: ParamSet, lemma: Optional[LemmaId] = None) -> Q:
    """Largest theta* (up to a 1e-30 rational margin on irrational roots) such that
    every constraint of the lemma holds on (0, theta*).

    ``lemma`` defaults to the shared pair family; deriv branches add their own
    constraints on top of it.
    """
    lemma = lemma or LemmaId.GLOBAL_BASE
    if lemma is LemmaId.GLOBAL_DERIV_3D:
        raise HypothesisError("theta is forced to F*alpha in the three-dimensional branch; no window")
    if not lemma.is_global:
        raise HypothesisError(f"{lemma.value} has no theta split")
    eps = params.eps
    star: Q = params.alpha
    for name, g, _strict, degree in theta_constraints(params, lemma, eps):
        a2, a1, c = _coefficients(g, degree)
        if c <= 0:
            raise HypothesisError(f"no positive theta window: {name} fails at theta = 0")
        root = _first_positive_root(a2, a1, c)
        if root is not None:
            star = min(star, root)
    if star <= 0:
        raise HypothesisError("no positive theta window")
    return star


def default_theta(params: ParamSet, lemma: Optional[LemmaId] = None) -> Q:
    return min(theta_window(params, lemma) / 2, DEFAULT_THETA_CAP)


def _check_theta(p: ParamSet, lemma: LemmaId, eps: Q) -> None:
    t = p.theta
    if not t > 0:
        raise HypothesisError(f"theta outside window: theta = {fmt(t)} must be positive")
    for name, g, strict, _degree in theta_constraints(p, lemma, eps):
        v = g(t)
        if v < 0 or (strict and v == 0):
            raise HypothesisError(f"theta outside window: {name} fails at theta = {fmt(t)}")


# ---------------------------------------------------------------------------
# global theory: systems


def _global_hypotheses(B: _Builder, p: ParamSet) -> None:
    N, a, b, s = p.N, p.alpha, p.b, p.s
    B.require("b < b_upper(N)", b_upper(N) - b)
    B.require("alpha > (4-2b)/N", a - (4 - 2 * b) / N)
    B.require("s <= min(N/2, 1)", min(F(N, 2), F(1)) - s, ">=0")
    if s <= F(N, 2):
        upper = alpha_upper(N, s, b)
        if upper is not INF:
            B.require(f"alpha < alpha_upper(N, s, b) = {fmt(upper)}", upper - a)
    B.require("s > s_c", s - p.s_c)


def _resolve_global(params: ParamSet, lemma: LemmaId, strict: bool) -> tuple[ParamSet, _Builder]:
    B = _Builder(lemma, params, strict, params.eps)
    _global_hypotheses(B, params)
    if params.s > F(params.N, 2):
        raise HypothesisError("regularity above N/2 unsupported")
    empty = windows_nonempty(params.N, params.s_c, params.eps)
    if empty:
        raise HypothesisError("epsilon too large: " + "; ".join(empty))
    if params.theta is None:
        params = params.with_(theta=default_theta(params, lemma))
    params = params.with_(epsilon=params.eps)
    if strict:
        _check_theta(params, lemma, params.eps)
    else:
        # record the window instead of stopping, so boundary reports stay inspectable
        B.sign("theta > 0", params.theta)
        for name, g, strict_c, _degree in theta_constraints(params, lemma, params.eps):
            B.sign(f"theta window: {name}", g(params.theta), ">0" if strict_c else ">=0")
    B.params = params
    return params, B


def _exterior_x(p: ParamSet, N: int) -> tuple[Q, Q, Q]:
    """Choice of x = 1/(theta r1) on the exterior: weight integrable there,
    theta r1 >= 2 and 1/gamma >= 0. Returns (lo, hi, midpoint)."""
    a, b, t = p.alpha, p.b, p.theta
    lo = (2 - b) / (N * a)
    hi = F(1, 2) if t == 0 else min(F(1, 2), (b * a + t * (2 - b)) / (N * t * a))
    return lo, hi, _midpoint(lo, hi, "1/(theta r1) on the exterior")


def _ball_x(p: ParamSet, N: int) -> tuple[Q, str]:
    s = p.s
    if s < F(N, 2):
        return (N - 2 * s) / F(2 * N), "theta*r1 = 2N/(N-2s)"
    top = (2 - p.b) / (N * p.alpha)
    return _midpoint(F(0), top, "1/(theta r1) on the ball"), _interval_note("1/(theta r1)", F(0), top)


def _base_pairs(B: _Builder, p: ParamSet) -> tuple[Q, Q, Q, Q]:
    N, a, b, t = p.N, p.alpha, p.b, p.theta
    sc = p.s_c
    qh = F(4) * a * (a + 2 - t) / (a * (N * a + 2 * b) - t * (N * a - 4 + 2 * b))
    rh = F(N) * a * (a + 2 - t) / (a * (N - b) - t * (2 - b))
    at = F(2) * a * (a + 2 - t) / (a * (N * (a + 1 - t) - 2 + 2 * b) - (4 - 2 * b) * (1 - t))
    ah = F(2) * a * (a + 2 - t) / (4 - 2 * b - (N - 2) * a)
    B.pair("(q_hat,r_hat)", qh, rh, PairClass.l2())
    B.pair("(a_hat,r_hat)", ah, rh, PairClass.hs(sc))
    B.pair("(a_tilde,r_hat)", at, rh, PairClass.hs_dual(sc))
    B.identity("1/a_hat + 1/a_tilde = 2/q_hat", 1 / ah + 1 / at, 2 / qh)
    B.identity("1/q_hat' = (alpha-theta)/a_hat + 1/q_hat", 1 - 1 / qh, (a - t) / ah + 1 / qh)
    B.identity("1/a_tilde' = (alpha+1-theta)/a_hat", 1 - 1 / at, (a + 1 - t) / ah)
    B.identity("a_hat = (alpha+2-theta)/(1-s_c)", ah, (a + 2 - t) / (1 - sc))
    return qh, rh, at, ah


def _base_region(B: _Builder, p: ParamSet, rh: Q, region: Region, tag: str = "") -> Q:
    """Weight estimate of |x|^-b |u|^alpha v in L^{r_hat'}; returns 1/r1."""
    N, a, b, t, s = p.N, p.alpha, p.b, p.theta, p.s
    if region is Region.BALL:
        x, note = _ball_x(p, N)
    else:
        lo, hi, x = _exterior_x(p, N)
        note = _interval_note("1/(theta r1)", lo, hi, hi_closed=True)
    inv_r1 = t * x
    inv_r2 = (a - t) / rh
    inv_beta = inv_r1 + inv_r2 + 1 / rh
    inv_gamma = 1 - 1 / rh - inv_beta
    name = f"{region.value.lower()}{tag}"
    B.system(name, region, {"gamma": inv_gamma, "beta": inv_beta, "r1": inv_r1, "r2": inv_r2},
             choices={"theta*r1": note}, outer=("gamma", "beta"))
    B.identity(f"{name}: N/gamma = N - N(alpha+2-theta)/r_hat - N/r1", N * inv_gamma, N - N * (a + 2 - t) / rh - N * inv_r1)
    B.identity(f"{name}: N/gamma - b = theta(2-b)/alpha - N/r1", N * inv_gamma - b, t * (2 - b) / a - N * inv_r1)
    if region is Region.BALL and s < F(N, 2):
        B.identity(f"{name}: N/gamma - b = theta(s - s_c)", N * inv_gamma - b, t * (s - p.s_c))
    B.weight(name, N, inv_gamma, b, region)
    _sobolev_range(B, name, N, s, x)
    return inv_r1


def _sobolev_range(B: _Builder, name: str, N: int, s: Q, x: Q, label: str = "theta*r1") -> None:
    """x = 1/(exponent) must allow the embedding of H^s into L^(1/x)."""
    B.sign(f"{name}: {label} >= 2", F(1, 2) - x, ">=0")
    if s < F(N, 2):
        B.sign(f"{name}: {label} <= 2N/(N-2s)", x - (N - 2 * s) / F(2 * N), ">=0")
    else:
        B.sign(f"{name}: {label} finite", x)


_TERM_A = "|u|^theta_{Linf Hs} |u|^(alpha-theta)_{S(Hsc)} |D^s u|_{S(L2)}"
_TERM_A_LOW = "|u|^theta_{Linf Hs} |u|^(alpha-theta)_{S(Hsc)} |u|_{S(L2)}"
_TERM_MU = "|u|^(1-mu)_{Linf Hs} |u|^theta_{S(Hsc)} |D^s u|^(alpha-theta+mu)_{S(L2)}"
_TERM_POW = "|u|^(1+theta)_{Linf Hs} |u|^(alpha-theta)_{S(Hsc)}"


def global_pairs(params: ParamSet, strict: bool = True) -> LemmaReport:
    """Shared pair family of the small-data global estimates."""
    p, B = _resolve_global(params, LemmaId.GLOBAL_BASE, strict)
    _, rh, _, _ = _base_pairs(B, p)
    _base_region(B, p, rh, Region.BALL)
    _base_region(B, p, rh, Region.BALL_COMPLEMENT)
    B.sign("theta in (0, alpha)", p.alpha - p.theta)
    return B.build(None)


def _deriv_highdim(B: _Builder, p: ParamSet) -> None:
    N, a, b, t, s = p.N, p.alpha, p.b, p.theta, p.s
    sc = p.s_c
    _, rh, _, _ = _base_pairs(B, p)
    B.sign("s < N/r_hat", N / rh - s)
    inv_r3 = 1 / rh - F(s) / N
    inv_r2 = (a - t) / rh
    for region in (Region.BALL, Region.BALL_COMPLEMENT):
        _base_region(B, p, rh, region, " N1")
    # N2 terms: derivative falls on the weight
    for region, x in ((Region.BALL, (N - 2 * s) / F(2 * N)), (Region.BALL_COMPLEMENT, F(1, 2))):
        name = f"{region.value.lower()} N2"
        inv_r1 = t * x
        inv_e = inv_r1 + inv_r2 + inv_r3
        inv_d = 1 - 1 / rh - inv_e
        B.system(name, region, {"d": inv_d, "e": inv_e, "r1": inv_r1, "r2": inv_r2, "r3": inv_r3},
                 choices={"theta*r1": "2N/(N-2s)" if region is Region.BALL else "2"}, outer=("d", "e"))
        B.identity(f"{name}: N/d - s = N - N(alpha+2-theta)/r_hat - N/r1", N * inv_d - s, N - N * (a + 2 - t) / rh - N * inv_r1)
        B.identity(f"{name}: N/d - b - s = theta(2-b)/alpha - N/r1", N * inv_d - b - s, t * (2 - b) / a - N * inv_r1)
        expected = t * (s - sc) if region is Region.BALL else -t * sc
        B.identity(f"{name}: N/d - b - s closed form", N * inv_d - b - s, expected)
        B.weight(name + " (derivative of weight)", N, inv_d, b + s, region)
        _sobolev_range(B, name, N, s, x)
    B.terms.append(_TERM_A)


def _deriv_3d(B: _Builder, p: ParamSet) -> None:
    a, b, s = p.alpha, p.b, p.s
    mu, eps, t = p.mu, p.eps, p.theta
    sc = p.s_c
    D = a - t + mu
    Fr = (2 - eps + mu - 2 * b) / (4 - 2 * b)
    B.identity("theta = F*alpha", t, Fr * a)
    B.sign("F - 1/2 > 0", Fr - F(1, 2))
    B.sign("1 - F > 0", 1 - Fr)
    B.sign("2 + eps - D > 0", 2 + eps - D)
    B.sign("(4-2b)theta - (2+eps-D)alpha > 0", (4 - 2 * b) * t - (2 + eps - D) * a)
    B.sign("(s - s_c)(alpha - theta) > 0", (s - sc) * (a - t))

    k = F(4) * a * (a + 1 - t) / (4 - 2 * b - a)
    pp = F(6) * a * (a + 1 - t) / ((4 - 2 * b) * (a - t) + a)
    l = F(4) * a * (a + 1 - t) / (a * (3 * a - 2 + 2 * b) - t * (3 * a - 4 + 2 * b))
    m = 4 * D / (D - eps)
    n = 6 * D / (2 * D + eps)
    astar = 4 * t / (2 + eps - D)
    rstar = 6 * a * t / ((4 - 2 * b) * t - (2 + eps - D) * a)
    B.pair("(2,6)", 2, 6, PairClass.l2())
    B.pair("(l,p)", l, pp, PairClass.l2())
    B.pair("(k,p)", k, pp, PairClass.hs(sc))
    B.pair("(m,n)", m, n, PairClass.l2())
    B.pair("(a*,r*)", astar, rstar, PairClass.hs(sc))
    B.identity("1/2' = (alpha-theta)/k + 1/l", F(1, 2), (a - t) / k + 1 / l)
    B.identity("1/2' = theta/a* + (alpha-theta+mu)/m", F(1, 2), t / astar + D / m)
    B.identity("r* = 6 alpha F/(2(mu-b-eps) + alpha(1-F))", rstar, 6 * a * Fr / (2 * (mu - b - eps) + a * (1 - Fr)))
    B.sign("3/n - s > 0", 3 / n - s)

    inv_r2 = (a - t) / pp
    # M1 on the ball
    x_ball = (3 - 2 * s) / F(6)
    inv_r1 = t * x_ball
    inv_beta = inv_r1 + inv_r2 + 1 / pp
    inv_gamma = F(5, 6) - inv_beta
    B.system("ball M1", Region.BALL, {"gamma": inv_gamma, "beta": inv_beta, "r1": inv_r1, "r2": inv_r2},
             choices={"theta*r1": "6/(3-2s)"}, outer=("gamma", "beta"))
    B.identity("ball M1: 3/gamma = 5/2 - 3/r1 - 3(alpha+1-theta)/p", 3 * inv_gamma, F(5, 2) - 3 * inv_r1 - 3 * (a + 1 - t) / pp)
    B.identity("ball M1: 3/gamma - b = theta(2-b)/alpha - 3/r1", 3 * inv_gamma - b, t * (2 - b) / a - 3 * inv_r1)
    B.identity("ball M1: 3/gamma - b = theta(s - s_c)", 3 * inv_gamma - b, t * (s - sc))
    B.weight("ball M1", 3, inv_gamma, b, Region.BALL)
    _sobolev_range(B, "ball M1", 3, s, x_ball)

    # M1 and M2 on the exterior share r1
    x_ext = F(1, 2)
    note = "theta*r1 = 2"
    if b + t * (2 - b) / a - 3 * t * x_ext < 0:
        lo, hi, x_ext = _exterior_x(p, 3)
        note = _interval_note("1/(theta r1)", lo, hi, hi_closed=True)
        B.notes.append("exterior r1 moved off theta*r1 = 2 because 1/gamma would be negative there")
    inv_r1 = t * x_ext
    inv_beta = inv_r1 + inv_r2 + 1 / pp
    inv_gamma = F(5, 6) - inv_beta
    inv_e = inv_r1 + inv_r2 + 1 / pp
    inv_d = F(5, 6) - inv_e
    B.system("ballcomplement M1 M2", Region.BALL_COMPLEMENT,
             {"gamma": inv_gamma, "beta": inv_beta, "d": inv_d, "e": inv_e, "r1": inv_r1, "r2": inv_r2},
             choices={"theta*r1": note}, outer=("gamma", "beta", "d", "e"))
    B.identity("ballcomplement: 3/gamma - b = theta(2-b)/alpha - 3/r1", 3 * inv_gamma - b, t * (2 - b) / a - 3 * inv_r1)
    B.identity("ballcomplement: 3/d - b = theta(2-b)/alpha - 3/r1", 3 * inv_d - b, t * (2 - b) / a - 3 * inv_r1)
    B.weight("ballcomplement M1", 3, inv_gamma, b, Region.BALL_COMPLEMENT)
    B.weight("ballcomplement M2 (derivative of weight)", 3, inv_d, b + s, Region.BALL_COMPLEMENT)
    _sobolev_range(B, "ballcomplement", 3, s, x_ext)

    # M2 on the ball: the mu-splitting
    inv_r1 = t / rstar
    inv_r2 = (a - t) * (3 / n - s) / 3
    inv_r3 = mu * (3 / n - s) / 3
    inv_r4 = (1 - mu) * (3 - 2 * s) / 6
    inv_e = inv_r1 + inv_r2 + inv_r3 + inv_r4
    inv_d = F(5, 6) - inv_e
    B.system("ball M2", Region.BALL,
             {"d": inv_d, "e": inv_e, "r1": inv_r1, "r2": inv_r2, "r3": inv_r3, "r4": inv_r4},
             choices={"theta*r1": "r*", "(1-mu)*r4": "6/(3-2s)"}, outer=("d", "e"))
    B.identity("ball M2: 3/d = 5/2 + sD - 3theta/r* - 3D/n - 3/r4", 3 * inv_d,
               F(5, 2) + s * D - 3 * t / rstar - 3 * D / n - 3 * inv_r4)
    B.identity("ball M2: 3/d = 7/2 + sD - (2-b)theta/alpha - 3D/2 - 3/r4", 3 * inv_d,
               F(7, 2) + s * D - (2 - b) * t / a - 3 * D / 2 - 3 * inv_r4)
    B.identity("ball M2: 3/d - b - s = (s - s_c)(alpha - theta)", 3 * inv_d - b - s, (s - sc) * (a - t))
    B.weight("ball M2 (derivative of weight)", 3, inv_d, b + s, Region.BALL)
    B.terms += [_TERM_A, _TERM_A_LOW, _TERM_MU]


def _deriv_1d(B: _Builder, p: ParamSet) -> None:
    a, b, t, s = p.alpha, p.b, p.theta, p.s
    sc = p.s_c
    ks = F(4) * a * (a + 1 - t) / ((4 - 2 * b) * (a - t + 1) - a)
    ls = F(4) * (a + 1 - t) / (a - t)
    ps = 2 * (a + 1 - t)
    q0 = F(2) * a / (a * b + t * (2 - b))
    r0 = F(2) * a / (a * (1 - 2 * b) - t * (4 - 2 * b))
    B.pair("(q0,r0)", q0, r0, PairClass.l2())
    B.pair("(l*,p*)", ls, ps, PairClass.l2())
    B.pair("(k*,p*)", ks, ps, PairClass.hs(sc))
    B.pair("(4/(1-2s_c),inf)", 4 / (1 - 2 * sc), INF, PairClass.hs(sc))
    B.identity("1/q0' = (alpha-theta)/k* + 1/l*", 1 - 1 / q0, (a - t) / ks + 1 / ls)
    B.identity("(alpha-theta) q0' = 4/(1-2s_c)", (a - t) * conj(q0), 4 / (1 - 2 * sc))
    inv_r2 = (a - t) / ps
    for region, x, xe in ((Region.BALL, (1 - 2 * s) / 2, (1 - 2 * s) / 2), (Region.BALL_COMPLEMENT, F(1, 2), F(1, 2))):
        name = region.value.lower()
        inv_r1 = t * x
        inv_beta = inv_r1 + inv_r2 + 1 / ps
        inv_gamma = 1 - 1 / r0 - inv_beta
        inv_e = (t + 1) * xe
        inv_d = 1 - 1 / r0 - inv_e
        ball = region is Region.BALL
        B.system(name, region, {"gamma": inv_gamma, "beta": inv_beta, "d": inv_d, "e": inv_e, "r1": inv_r1, "r2": inv_r2},
                 choices={"theta*r1": "2/(1-2s)" if ball else "2", "(theta+1)*e": "2/(1-2s)" if ball else "2"},
                 outer=("gamma", "beta", "d", "e"))
        B.identity(f"{name}: 1/gamma - b = theta(2-b)/alpha - 1/r1", inv_gamma - b, t * (2 - b) / a - inv_r1)
        B.identity(f"{name}: 1/gamma - b closed form", inv_gamma - b, t * (s - sc) if ball else -t * sc)
        B.identity(f"{name}: 1/d - b = 1/2 + theta(2-b)/alpha - 1/e", inv_d - b, F(1, 2) + t * (2 - b) / a - inv_e)
        B.identity(f"{name}: 1/d - b - s closed form", inv_d - b - s, t * (s - sc) if ball else -t * sc - s)
        B.weight(name, 1, inv_gamma, b, region)
        B.weight(name + " (derivative of weight)", 1, inv_d, b + s, region)
        _sobolev_range(B, name, 1, s, x)
        _sobolev_range(B, name, 1, s, xe, "(theta+1)*e")
    B.terms += [_TERM_A, _TERM_POW]


def _deriv_2d(B: _Builder, p: ParamSet) -> None:
    a, b, t, s = p.alpha, p.b, p.theta, p.s
    eps = p.eps
    sc = p.s_c
    qt = F(2) * a / (a * (b + 2 * eps * (a - t)) + t * (2 - b))
    rt = F(2) * a / (a * (1 - b - 2 * eps * (a - t)) - t * (2 - b))
    l0 = F(2) * (a + 1 - t) / ((a - t) * (1 - 2 * eps))
    p0 = F(2) * (a + 1 - t) / (1 + 2 * eps * (a - t))
    k0 = F(2) * a * (a + 1 - t) / (a * (1 - b - 2 * eps * (a - t)) + (2 - b) * (1 - t))
    B.require("2 - b - 2 eps alpha > 0", 2 - b - 2 * eps * a)
    B.pair("(q_tilde,r_tilde)", qt, rt, PairClass.l2())
    B.pair("(l0,p0)", l0, p0, PairClass.l2())
    B.pair("(k0,p0)", k0, p0, PairClass.hs(sc))
    B.pair("(2alpha/(2-b-2eps alpha),1/eps)", 2 * a / (2 - b - 2 * eps * a), 1 / eps, PairClass.hs(sc))
    B.identity("1/q_tilde' = (alpha-theta)/k0 + 1/l0", 1 - 1 / qt, (a - t) / k0 + 1 / l0)
    B.identity("(alpha-theta) q_tilde' = 2alpha/(2-b-2eps alpha)", (a - t) * conj(qt), 2 * a / (2 - b - 2 * eps * a))
    inv_r2 = (a - t) / p0
    inv_r2e = eps * (a - t)
    for region, x, xe in ((Region.BALL, (1 - s) / 2, (1 - s) / 2), (Region.BALL_COMPLEMENT, F(1, 2), F(1, 2))):
        name = region.value.lower()
        ball = region is Region.BALL
        inv_r1 = t * x
        inv_beta = inv_r1 + inv_r2 + 1 / p0
        inv_gamma = 1 - 1 / rt - inv_beta
        inv_r1e = (t + 1) * xe
        inv_e = inv_r1e + inv_r2e
        inv_d = 1 - 1 / rt - inv_e
        B.system(name, region,
                 {"gamma": inv_gamma, "beta": inv_beta, "d": inv_d, "e": inv_e, "r1": inv_r1, "r2": inv_r2,
                  "r1 (weight derivative term)": inv_r1e, "r2 (weight derivative term)": inv_r2e},
                 choices={"theta*r1": "2/(1-s)" if ball else "2", "(theta+1)*r1": "2/(1-s)" if ball else "2"},
                 outer=("gamma", "beta", "d", "e"))
        B.identity(f"{name}: 2/gamma - b = theta(2-b)/alpha - 2/r1", 2 * inv_gamma - b, t * (2 - b) / a - 2 * inv_r1)
        B.identity(f"{name}: 2/gamma - b closed form", 2 * inv_gamma - b, t * (s - sc) if ball else -t * sc)
        B.identity(f"{name}: 2/d = 2 - 2/r_tilde - 2/r1 - 2eps(alpha-theta)", 2 * inv_d,
                   2 - 2 / rt - 2 * inv_r1e - 2 * eps * (a - t))
        B.identity(f"{name}: 2/d = 1 + b + theta(2-b)/alpha - 2/r1", 2 * inv_d, 1 + b + t * (2 - b) / a - 2 * inv_r1e)
        B.identity(f"{name}: 2/d - b - s closed form", 2 * inv_d - b - s, t * (s - sc) if ball else -t * sc - s)
        B.weight(name, 2, inv_gamma, b, region)
        B.weight(name + " (derivative of weight)", 2, inv_d, b + s, region)
        _sobolev_range(B, name, 2, s, x)
        _sobolev_range(B, name, 2, s, xe, "(theta+1)*r1")
    B.terms += [_TERM_A, _TERM_POW]


def _deriv_halfdim(B: _Builder, p: ParamSet) -> None:
    N, a, b, t, s = p.N, p.alpha, p.b, p.theta, p.s
    sc = p.s_c
    w = a + 1 - t
    abar = 2 * w / (2 - sc)
    qbar = 2 * w / (2 + sc * (a - t))
    rbar = 2 * N * w / (N * w - 2 * sc * (a - t) - 4)
    kbar = 2 * w**2 / (2 * (a - t) * (1 - sc) - sc)
    lbar = 2 * w**2 / (2 * (a - t) * (1 - sc) + sc * (w**2 - 1))
    pbar = 2 * N * w**2 / ((N - 2 * sc) * w**2 - 4 * (a - t) * (1 - sc) + 2 * sc)
    B.pair("(q_bar,r_bar)", qbar, rbar, PairClass.l2())
    B.pair("(a_bar,r_bar)", abar, rbar, PairClass.hs(sc))
    B.pair("(l_bar,p_bar)", lbar, pbar, PairClass.l2())
    B.pair("(k_bar,p_bar)", kbar, pbar, PairClass.hs(sc))
    B.identity("1/q_bar' = (alpha-theta)/k_bar + 1/l_bar", 1 - 1 / qbar, (a - t) / kbar + 1 / lbar)
    B.identity("a_bar = (alpha-theta) q_bar'", abar, (a - t) * conj(qbar))
    B.identity("r_bar = 2N(alpha+1-theta)/(N-2b-theta(N-2s_c))", rbar, 2 * N * w / (N - 2 * b - t * (N - 2 * sc)))
    inv_r2 = (a - t) / pbar
    inv_r2e = (a - t) / rbar
    for region in (Region.BALL, Region.BALL_COMPLEMENT):
        name = region.value.lower()
        if region is Region.BALL:
            x, note = _ball_x(p, N)
        else:
            lo, hi, x = _exterior_x(p, N)
            note = _interval_note("1/(theta r1)", lo, hi, hi_closed=True)
        inv_r1 = t * x
        inv_beta = inv_r1 + inv_r2 + 1 / pbar
        inv_gamma = 1 - 1 / rbar - inv_beta
        inv_e = inv_r1 + inv_r2e
        inv_d = 1 - 1 / rbar - inv_e
        B.system(name, region,
                 {"gamma": inv_gamma, "beta": inv_beta, "d": inv_d, "e": inv_e, "r1": inv_r1, "r2": inv_r2,
                  "r2 (weight derivative term)": inv_r2e},
                 choices={"theta*r1": note}, outer=("gamma", "beta", "d", "e"))
        B.identity(f"{name}: N/gamma - b = N - b - N/r1 - N/r_bar - N(alpha+1-theta)/p_bar", N * inv_gamma - b,
                   N - b - N * inv_r1 - N / rbar - N * w / pbar)
        B.identity(f"{name}: N/gamma - b = theta(2-b)/alpha - N/r1", N * inv_gamma - b, t * (2 - b) / a - N * inv_r1)
        B.identity(f"{name}: N/d - b - s = theta(2-b)/alpha - N/r1", N * inv_d - b - s, t * (2 - b) / a - N * inv_r1)
        B.weight(name, N, inv_gamma, b, region)
        B.weight(name + " (derivative of weight)", N, inv_d, b + s, region)
        _sobolev_range(B, name, N, s, x)
        _sobolev_range(B, name, N, s, inv_r1 / (t + 1), "(theta+1)*r1")
    B.terms += [_TERM_A, _TERM_POW]


_DERIV_BUILDERS = {
    LemmaId.GLOBAL_DERIV_HIGHDIM: _deriv_highdim,
    LemmaId.GLOBAL_DERIV_1D: _deriv_1d,
    LemmaId.GLOBAL_DERIV_2D: _deriv_2d,
    LemmaId.GLOBAL_DERIV_HALFDIM: _deriv_halfdim,
}


def lemma4_defaults(params: ParamSet) -> ParamSet:
    """Fill mu, epsilon and the forced theta of the three-dimensional branch."""
    b = params.b
    mu = params.mu if params.mu is not None else (1 + b) / 2
    if not b < mu < 1:
        raise HypothesisError(f"mu outside (b,1): mu = {fmt(mu)}")
    eps = params.epsilon if params.epsilon is not None else (mu - b) / 4
    if not eps < mu - b:
        raise HypothesisError(f"epsilon must be below mu - b = {fmt(mu - b)}")
    theta = params.alpha * (2 - eps + mu - 2 * b) / (4 - 2 * b)
    if params.theta is not None and params.theta != theta:
        raise HypothesisError(f"theta is forced to F*alpha = {fmt(theta)} in the three-dimensional branch")
    return params.with_(mu=mu, epsilon=eps, theta=theta)


def global_deriv_system(params: ParamSet, strict: bool = True, branch: Optional[LemmaId] = None) -> LemmaReport:
    """Estimate of D^s of the nonlinearity in S'(L2); dispatches on (N, s)."""
    expected = global_deriv_branch(params.N, params.s)
    lemma = branch or expected
    if lemma != expected:
        raise HypothesisError(f"wrong dimension branch: {lemma.value} does not cover N={params.N}, s={fmt(params.s)}")
    if lemma is LemmaId.GLOBAL_DERIV_3D:
        p = lemma4_defaults(params)
        B = _Builder(lemma, p, strict, p.eps)
        _global_hypotheses(B, p)
        empty = windows_nonempty(3, p.s_c, p.eps)
        if empty:
            raise HypothesisError("epsilon too large: " + "; ".join(empty))
        _deriv_3d(B, p)
    else:
        p, B = _resolve_global(params, lemma, strict)
        _DERIV_BUILDERS[lemma](B, p)
    B.sign("theta in (0, alpha)", p.alpha - p.theta)
    return B.build(None)


# ---------------------------------------------------------------------------
# facade


def verify_lemma(lemma: LemmaId, params: ParamSet, strict: bool = True) -> LemmaReport:
    """Build the full report of one lemma branch.

    With ``strict`` a violated hypothesis raises HypothesisError; otherwise it
    is recorded as a failed sign condition so boundary cases can be inspected.
    """
    if lemma is LemmaId.LOCAL_L2:
        return local_l2_system(params, strict)
    if lemma in LOCAL_HS_BRANCHES:
        return local_hs_system(params, strict, branch=lemma)
    if lemma is LemmaId.GLOBAL_BASE:
        return global_pairs(params, strict)
    return global_deriv_system(params, strict, branch=lemma)


def lemma_by_name(name: str, params: Optional[ParamSet] = None) -> LemmaId:
    """Resolve a CLI name; ``local-hs`` and ``global-deriv`` dispatch on params."""
    if name == "local-hs":
        if params is None:
            raise ValueError("local-hs needs params to pick a branch")
        return local_hs_branch(params.N, params.s)
    if name == "global-deriv":
        if params is None:
            raise ValueError("global-deriv needs params to pick a branch")
        return global_deriv_branch(params.N, params.s)
    for lemma, cli in _CLI_NAMES.items():
        if cli == name or lemma.value == name:
            return lemma
    raise ValueError(f"unknown lemma {name!r}")


LEMMA_NAMES = ("local-l2", "local-hs", "global-deriv") + tuple(_CLI_NAMES[l] for l in LemmaId if l is not LemmaId.LOCAL_L2)


# ---------------------------------------------------------------------------
# contraction time


@dataclass(frozen=True)
class TimeBound:
    T: float
    a: float
    c: float
    d_exponent: Q

    def lhs(self, alpha: float, theta1: float, theta2: float) -> float:
        return self.c * self.a**alpha * (self.T**theta1 + self.T**theta2)


def contraction_time(a: float, theta1, theta2, c: float, alpha) -> TimeBound:
    """Largest T with c a^alpha (T^theta1 + T^theta2) <= 1/4, to relative 1e-12.

    Also returns d = alpha / min(theta1, theta2), the exponent in T ~ C a^-d
    for large a.
    """
    theta1, theta2, alpha_r = rat(theta1), rat(theta2), rat(alpha)
    if not (a > 0 and c > 0 and theta1 > 0 and theta2 > 0):
        raise ValueError("contraction_time needs a, c, theta1, theta2 > 0")
    t1, t2, al = float(theta1), float(theta2), float(alpha_r)
    target = 0.25 * (1 - 1e-12)
    log_scale = math.log(c) + al * math.log(a)

    def excess(log_t: float) -> float:
        # log of c a^alpha (T^t1 + T^t2) minus log target, computed stably
        m = max(t1 * log_t, t2 * log_t)
        return log_scale + m + math.log(math.exp(t1 * log_t - m) + math.exp(t2 * log_t - m)) - math.log(target)

    lo, hi = -1.0, 1.0
    while excess(lo) > 0:
        lo *= 2
    while excess(hi) < 0:
        hi *= 2
    root = brentq(excess, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    step = 1e-16 * max(1.0, abs(root))
    while excess(root) > 0:
        root -= step
        step *= 2
    return TimeBound(T=math.exp(root), a=float(a), c=float(c), d_exponent=alpha_r / min(theta1, theta2))
