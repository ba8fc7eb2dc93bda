import random
from fractions import Fraction as Fr

from hypothesis import given, settings, strategies as st

from inls_lab.exponent_core import alpha_upper, b_upper
from inls_lab.lemma_catalog import LemmaId
from inls_lab.sampling import _dyadic_floor, epsilon_for, sample_params, sweep


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(list(LemmaId)), st.integers(0, 10**9))
def test_samples_lie_strictly_inside_the_region(lemma, seed):
    p = sample_params(lemma, random.Random(seed))
    assert p.alpha > 0 and p.b > 0
    if lemma is LemmaId.LOCAL_L2:
        assert p.b < min(2, p.N) and p.alpha < (4 - 2 * p.b) / p.N
        return
    assert p.b < b_upper(p.N)
    assert 0 < p.s <= min(Fr(p.N, 2), 1)
    if p.s < Fr(p.N, 2):
        assert p.alpha < alpha_upper(p.N, p.s, p.b)
    if lemma.is_global:
        assert 0 < p.s_c < p.s
        assert p.epsilon == epsilon_for(p.with_(epsilon=None), lemma)


def test_sweeps_are_reproducible():
    a = list(sweep(LemmaId.GLOBAL_BASE, 20, seed=5))
    b = list(sweep(LemmaId.GLOBAL_BASE, 20, seed=5))
    c = list(sweep(LemmaId.GLOBAL_BASE, 20, seed=6))
    assert a == b and a != c


@given(st.fractions(min_value=Fr(1, 10**6), max_value=1))
def test_dyadic_floor(x):
    d = _dyadic_floor(x)
    assert d <= x < 2 * d
    assert d.numerator == 1 and d.denominator & (d.denominator - 1) == 0
