"""Pseudorandom rational parameters strictly inside each lemma's hypothesis region."""

from __future__ import annotations

import random
from typing import Iterator, Optional

from .exponent_core import DEFAULT_EPS, Q, ParamSet, alpha_upper, b_upper, critical_index
from .lemma_catalog import LemmaId

F = Q
GRID = 997  # interior points per interval
HALFDIM_ALPHA_CAP = F(12)  # no upper power bound at s = N/2; cap the draw


def _inside(rng: random.Random, lo: Q, hi: Q) -> Q:
    return lo + (hi - lo) * F(rng.randint(1, GRID - 1), GRID)


def _dims(lemma: LemmaId) -> tuple[int, ...]:
    return {
        LemmaId.LOCAL_HS_HIGHDIM: (3, 4, 5, 6),
        LemmaId.LOCAL_HS_LOWDIM: (1, 2),
        LemmaId.LOCAL_HS_HALFDIM: (1, 2),
        LemmaId.GLOBAL_DERIV_HIGHDIM: (4, 5, 6),
        LemmaId.GLOBAL_DERIV_3D: (3,),
        LemmaId.GLOBAL_DERIV_1D: (1,),
        LemmaId.GLOBAL_DERIV_2D: (2,),
        LemmaId.GLOBAL_DERIV_HALFDIM: (1, 2),
    }.get(lemma, (1, 2, 3, 4, 5, 6))


def _draw_s(rng: random.Random, lemma: LemmaId, N: int) -> Q:
    top = min(F(N, 2), F(1))
    if lemma in (LemmaId.LOCAL_HS_HALFDIM, LemmaId.GLOBAL_DERIV_HALFDIM):
        return F(N, 2)
    if lemma in (LemmaId.GLOBAL_DERIV_1D, LemmaId.GLOBAL_DERIV_2D, LemmaId.LOCAL_HS_LOWDIM):
        return _inside(rng, F(0), top)
    if lemma is LemmaId.GLOBAL_BASE and rng.random() < 0.3:
        return top
    return _inside(rng, F(0), top) if rng.random() < 0.7 else top


def epsilon_for(params: ParamSet, lemma: LemmaId) -> Optional[Q]:
    """A-priori epsilon: small relative to the distance from every hypothesis boundary.

    Chosen from the parameters alone, never from a verifier outcome.
    """
    if not lemma.is_global:
        return None
    N, a, b, s = params.N, params.alpha, params.b, params.s
    s_c = params.s_c
    margins = [b, b_upper(N) - b, s_c, s - s_c]
    if s < F(N, 2):
        margins.append(s / a)  # distance of s_c from the upper power bound, in s units
    margin = min(margins)
    if lemma is LemmaId.GLOBAL_DERIV_3D:
        mu = params.mu if params.mu is not None else (1 + b) / 2
        return (mu - b) * _dyadic_floor(min(F(1, 4), margin / 8))
    return _dyadic_floor(min(DEFAULT_EPS, margin / 64))


def _dyadic_floor(x: Q) -> Q:
    # largest 2^-k not above x; keeps denominators small in exact arithmetic
    k = 0
    while F(1, 2**k) > x:
        k += 1
    return F(1, 2**k)


def sample_params(lemma: LemmaId, rng: random.Random, margin_eps: bool = True) -> ParamSet:
    """One ParamSet strictly inside the hypothesis region of ``lemma``.

    With ``margin_eps`` the epsilon of global branches follows ``epsilon_for``;
    otherwise the library defaults apply.
    """
    N = rng.choice(_dims(lemma))
    if lemma is LemmaId.LOCAL_L2:
        b = _inside(rng, F(0), min(F(2), F(N)))
        alpha = _inside(rng, F(0), (4 - 2 * b) / N)
        return ParamSet(N, alpha, b, lambda_sign=rng.choice((1, -1)))
    b = _inside(rng, F(0), b_upper(N))
    s = _draw_s(rng, lemma, N)
    top = HALFDIM_ALPHA_CAP if s == F(N, 2) else alpha_upper(N, s, b)
    if lemma.is_global:
        # alpha between the mass-critical power and the upper bound, so 0 < s_c < s
        alpha = _inside(rng, (4 - 2 * b) / N, top)
    else:
        alpha = _inside(rng, F(0), top)
    params = ParamSet(N, alpha, b, s, lambda_sign=rng.choice((1, -1)))
    if N == 3 and lemma is LemmaId.GLOBAL_DERIV_3D:
        params = params.with_(mu=(1 + b) / 2)
    if margin_eps:
        eps = epsilon_for(params, lemma)
        if eps is not None:
            params = params.with_(epsilon=eps)
    assert lemma.is_global is False or 0 < critical_index(N, alpha, b) < s
    return params


def sweep(lemma: LemmaId, count: int, seed: int = 0, margin_eps: bool = True) -> Iterator[ParamSet]:
    rng = random.Random(f"{lemma.value}:{seed}")
    for _ in range(count):
        yield sample_params(lemma, rng, margin_eps)
