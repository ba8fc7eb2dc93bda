"""Exact exponent arithmetic and the admissible-pair calculus.

Every exponent is an exact rational (``gmpy2.mpq``, interchangeable with
``fractions.Fraction`` in comparisons and hashing) or the singleton ``INF``.
Floats are rejected at the boundary so that no check ever degrades to a
tolerance.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Union

from gmpy2 import mpq as Q


class _Infinity:
    """Positive infinity as an exact exponent value.

    Compares above every finite rational, absorbs addition and positive
    scaling, and has reciprocal 0.
    """

    _instance: Optional["_Infinity"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INF"

    def __str__(self) -> str:
        return "inf"

    def __float__(self) -> float:
        return math.inf

    def __hash__(self) -> int:
        return hash("inls_lab.INF")

    def __eq__(self, other) -> bool:
        return other is self

    def __ne__(self, other) -> bool:
        return other is not self

    def __lt__(self, other) -> bool:
        _check_comparable(other)
        return False

    def __le__(self, other) -> bool:
        _check_comparable(other)
        return other is self

    def __gt__(self, other) -> bool:
        _check_comparable(other)
        return other is not self

    def __ge__(self, other) -> bool:
        _check_comparable(other)
        return True

    def __add__(self, other):
        _check_comparable(other)
        return self

    __radd__ = __add__

    def __sub__(self, other):
        if other is self:
            raise ArithmeticError("inf - inf is undefined")
        _check_comparable(other)
        return self

    def __mul__(self, other):
        _check_comparable(other)
        if other is self or other > 0:
            return self
        raise ArithmeticError("inf times a non-positive value is undefined")

    __rmul__ = __mul__

    def __truediv__(self, other):
        _check_comparable(other)
        if other is self:
            raise ArithmeticError("inf / inf is undefined")
        if other > 0:
            return self
        raise ArithmeticError("inf divided by a non-positive value is undefined")

    def __rtruediv__(self, other):
        _check_comparable(other)
        return Q(0)


def _check_comparable(other) -> None:
    if other is INF:
        return
    if isinstance(other, bool) or not isinstance(other, (int, Fraction, _MPQ)):
        raise TypeError(f"cannot mix exact exponents with {type(other).__name__}")


INF = _Infinity()
_MPQ = type(Q())

Rational = Union[Q, _Infinity]


def rat(value) -> Rational:
    """Coerce ints, Fractions, ``INF`` or strings like ``"3/4"``/``"inf"``.

    Floats are refused on purpose.
    """
    if value is INF:
        return INF
    if isinstance(value, bool):
        raise TypeError("booleans are not exponents")
    if isinstance(value, _MPQ):
        return value
    if isinstance(value, (int, Fraction)):
        return Q(value)
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf", "infinity", "∞"):
            return INF
        try:
            return Q(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational: {value!r}") from exc
    raise TypeError(f"refusing inexact value {value!r} of type {type(value).__name__}")


def fmt(value: Rational) -> str:
    """Canonical text form: reduced ``p/q`` (``p`` for integers) or ``inf``."""
    if value is INF:
        return "inf"
    return str(Q(value))


def recip(value: Rational) -> Q:
    """1/value, with 1/inf = 0. Division by zero raises."""
    if value is INF:
        return Q(0)
    return Q(1) / value


def from_recip(value: Q) -> Rational:
    """Inverse of ``recip``: a zero reciprocal means an infinite exponent."""
    if value == 0:
        return INF
    return Q(1) / value


def conj(value: Rational) -> Rational:
    """Hoelder conjugate p' with 1/p + 1/p' = 1, for p in [1, inf]."""
    if value is INF:
        return Q(1)
    if value < 1:
        raise ValueError(f"Hoelder conjugate needs p >= 1, got {fmt(value)}")
    return from_recip(1 - recip(value))


def critical_index(N: int, alpha, b) -> Q:
    """s_c = N/2 - (2-b)/alpha, the scale-invariant regularity."""
    alpha, b = rat(alpha), rat(b)
    if alpha == 0:
        raise ValueError("undefined critical index: alpha = 0")
    return Q(N, 2) - (2 - b) / alpha


def alpha_upper(N: int, s, b) -> Rational:
    """Upper end of the subcritical power range at regularity s."""
    s, b = rat(s), rat(b)
    half = Q(N, 2)
    if s > half:
        raise ValueError("regularity above N/2 unsupported")
    if s == half:
        return INF
    return (4 - 2 * b) / (N - 2 * s)


def b_upper(N: int) -> Q:
    """Weight exponent cap of the H^s theory: N/3 up to N=3, then 2."""
    if N < 1:
        raise ValueError("dimension must be positive")
    return Q(N, 3) if N <= 3 else Q(2)


def two_star(N: int, b) -> Rational:
    """Energy-critical power (4-2b)/(N-2); infinite in dimensions 1 and 2."""
    b = rat(b)
    if N <= 2:
        return INF
    return (4 - 2 * b) / (N - 2)


def plus_conjugate(a, eps) -> Q:
    """(a+)' = (a+eps)*a/eps, so that 1/a = 1/(a+)' + 1/(a+eps)."""
    a, eps = rat(a), rat(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if a is INF or a <= 0:
        raise ValueError(f"plus_conjugate needs a finite positive base, got {fmt(a)}")
    return (a + eps) * a / eps


class Region(enum.Enum):
    BALL = "Ball"
    BALL_COMPLEMENT = "BallComplement"


def weight_margin(gamma: Rational, b_eff, N: int) -> Q:
    """N/gamma - b_eff; its sign decides where |x|^(-b_eff) is L^gamma."""
    return N * recip(gamma) - rat(b_eff)


def singular_weight_integrable(gamma, b_eff, N: int, region: Region) -> bool:
    margin = weight_margin(rat(gamma), b_eff, N)
    if region is Region.BALL:
        return margin > 0
    return margin < 0


@dataclass(frozen=True)
class Pair:
    q: Rational
    r: Rational

    def __post_init__(self):
        object.__setattr__(self, "q", rat(self.q))
        object.__setattr__(self, "r", rat(self.r))
        if self.q < 1 or self.r < 1:
            raise ValueError(f"pair components must be >= 1, got ({fmt(self.q)}, {fmt(self.r)})")

    def __str__(self) -> str:
        return f"({fmt(self.q)}, {fmt(self.r)})"


def dual_pair(pair: Pair) -> Pair:
    return Pair(conj(pair.q), conj(pair.r))


class ClassKind(enum.Enum):
    L2 = "L2Admissible"
    HS = "HsAdmissible"
    HS_DUAL = "HsDualAdmissible"
    NONE = "NotAdmissible"


@dataclass(frozen=True)
class PairClass:
    kind: ClassKind
    s: Optional[Q] = None
    reason: str = field(default="", compare=False)

    @classmethod
    def l2(cls) -> "PairClass":
        return cls(ClassKind.L2)

    @classmethod
    def hs(cls, s) -> "PairClass":
        return cls(ClassKind.HS, rat(s))

    @classmethod
    def hs_dual(cls, s) -> "PairClass":
        return cls(ClassKind.HS_DUAL, rat(s))

    @classmethod
    def not_admissible(cls, reason: str) -> "PairClass":
        return cls(ClassKind.NONE, None, reason)

    @property
    def admissible(self) -> bool:
        return self.kind is not ClassKind.NONE

    def __str__(self) -> str:
        if self.kind is ClassKind.L2:
            return "L2Admissible"
        if self.kind is ClassKind.NONE:
            return f"NotAdmissible({self.reason})"
        return f"{self.kind.value}({fmt(self.s)})"


@dataclass(frozen=True)
class Window:
    """Closed range lo <= r <= hi, except that ``hi_open`` makes the top strict."""

    lo: Rational
    hi: Rational
    hi_open: bool = False

    def contains(self, r: Rational) -> bool:
        if r < self.lo:
            return False
        if self.hi_open:
            return r < self.hi
        return r <= self.hi

    @property
    def empty(self) -> bool:
        if self.hi_open:
            return not self.lo < self.hi
        return not self.lo <= self.hi

    def __str__(self) -> str:
        top = ")" if self.hi_open else "]"
        return f"[{fmt(self.lo)}, {fmt(self.hi)}{top}"


def _sobolev_base(N: int, s: Q) -> Rational:
    # 2N/(N-2s), written out per dimension
    if N == 1:
        return INF if s == Q(1, 2) else 2 / (1 - 2 * s)
    if N == 2:
        return 2 / (1 - s)
    return Q(2 * N) / (N - 2 * s)


def range_window(kind: ClassKind, N: int, s, eps) -> Optional[Window]:
    """Spatial-exponent window for the given class, with eps-shrunk open ends.

    Returns None when the window is undefined for (N, s).
    """
    return _range_window(kind, N, rat(s), rat(eps))


@functools.lru_cache(maxsize=4096)
def _range_window(kind: ClassKind, N: int, s: Q, eps: Q) -> Optional[Window]:
    top3 = Q(2 * N, N - 2) - eps if N >= 3 else None
    if kind is ClassKind.L2:
        if N >= 3:
            return Window(Q(2), Q(2 * N, N - 2))
        return Window(Q(2), INF, hi_open=(N == 2))
    limit = Q(1, 2) if N == 1 else (Q(1) if N == 2 else Q(N, 2))
    if s < 0 or s > limit or (N >= 2 and s == limit):
        return None
    base = _sobolev_base(N, s)
    if kind is ClassKind.HS:
        if N >= 3:
            return Window(base, top3)
        if N == 2:
            return Window(base, plus_conjugate(base, eps))
        return Window(base, INF)
    if kind is ClassKind.HS_DUAL:
        lo = base + eps
        if N >= 3:
            return Window(lo, top3)
        if N == 2:
            return Window(lo, plus_conjugate(2 / (1 + s), eps))
        return Window(lo, INF)
    raise ValueError(f"no window for {kind}")


def scaling_gap(pair: Pair, N: int, shift) -> Q:
    """2/q - (N/2 - N/r + shift); zero exactly on the scaling line."""
    return 2 * recip(pair.q) - (Q(N, 2) - N * recip(pair.r) + rat(shift))


def classify_pair(pair: Pair, N: int, s=0, eps=Q(1, 1000)) -> PairClass:
    """Classify a pair as L2, H^s or dual H^{-s} admissible.

    With s = 0 the three scaling lines coincide and only L2 is reported.
    """
    s, eps = rat(s), rat(eps)
    if s < 0:
        raise ValueError("regularity must be nonnegative")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if s == 0:
        candidates = [(ClassKind.L2, Q(0))]
    else:
        candidates = [(ClassKind.HS, -s), (ClassKind.HS_DUAL, s)]
    for kind, shift in candidates:
        if scaling_gap(pair, N, shift) != 0:
            continue
        window = range_window(kind, N, s, eps)
        if window is None:
            return PairClass.not_admissible(f"{kind.value} window undefined for N={N}, s={fmt(s)}")
        if not window.contains(pair.r):
            return PairClass.not_admissible(f"r={fmt(pair.r)} outside {kind.value} window {window}")
        if kind is ClassKind.L2:
            return PairClass.l2()
        return PairClass(kind, s)
    return PairClass.not_admissible("scaling relation fails")


def windows_nonempty(N: int, s, eps) -> list[str]:
    """Names of eps-shrunk windows at regularity s that came out empty."""
    bad = []
    for kind in (ClassKind.HS, ClassKind.HS_DUAL):
        window = range_window(kind, N, s, eps)
        if window is not None and window.empty:
            bad.append(f"{kind.value} window {window} is empty")
    return bad


class HypothesisError(ValueError):
    """A lemma was asked to run outside its hypothesis region."""


@dataclass(frozen=True)
class ParamSet:
    """Parameters (N, alpha, b, s, lambda, theta, epsilon, mu) of one lemma run.

    ``theta``, ``epsilon`` and ``mu`` may be left as None; each lemma then
    applies its own default.
    """

    N: int
    alpha: Q
    b: Q
    s: Q = Q(0)
    lambda_sign: int = 1
    theta: Optional[Q] = None
    epsilon: Optional[Q] = None
    mu: Optional[Q] = None

    def __post_init__(self):
        if not isinstance(self.N, int) or isinstance(self.N, bool) or not 1 <= self.N <= 6:
            raise HypothesisError(f"N must be an integer in 1..6, got {self.N!r}")
        for name in ("alpha", "b", "s"):
            object.__setattr__(self, name, rat(getattr(self, name)))
        for name in ("theta", "epsilon", "mu"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, rat(value))
        if self.alpha is INF or self.b is INF or self.s is INF:
            raise HypothesisError("alpha, b and s must be finite")
        if self.lambda_sign not in (1, -1):
            raise HypothesisError("lambda must be +1 or -1")
        if not self.alpha > 0:
            raise HypothesisError("alpha > 0 violated")
        if not self.b > 0:
            raise HypothesisError("b > 0 violated")
        if self.s < 0:
            raise HypothesisError("s >= 0 violated")
        if self.theta is not None and self.theta < 0:
            raise HypothesisError("theta >= 0 violated")
        if self.epsilon is not None and not self.epsilon > 0:
            raise HypothesisError("epsilon > 0 violated")

    @property
    def eps(self) -> Q:
        return self.epsilon if self.epsilon is not None else DEFAULT_EPS

    @property
    def s_c(self) -> Q:
        return critical_index(self.N, self.alpha, self.b)

    def with_(self, **changes) -> "ParamSet":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {
            "N": self.N,
            "alpha": fmt(self.alpha),
            "b": fmt(self.b),
            "s": fmt(self.s),
            "lambda": self.lambda_sign,
        }
        for name in ("theta", "epsilon", "mu"):
            value = getattr(self, name)
            out[name] = None if value is None else fmt(value)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ParamSet":
        opt = {k: (None if data.get(k) is None else rat(data[k])) for k in ("theta", "epsilon", "mu")}
        return cls(
            N=int(data["N"]),
            alpha=rat(data["alpha"]),
            b=rat(data["b"]),
            s=rat(data.get("s", 0)),
            lambda_sign=int(data.get("lambda", 1)),
            **opt,
        )


DEFAULT_EPS = Q(1, 1000)
