import numpy as np
import pytest
from hypothesis import given, strategies as st

from har_guard.embedding import HashedNgramEmbedder, cosine, embed, max_similarity


def test_deterministic_unit_vectors():
    a, b = embed("walking forward"), embed("walking forward")
    assert np.array_equal(a, b)
    assert a.shape == (256,)
    assert cosine(a, a) == pytest.approx(1.0, abs=1e-6)


def test_near_synonym_closer_than_different_activity():
    a = embed("walking forward")
    near, far = cosine(a, embed("walking forwards")), cosine(a, embed("standing still"))
    # regression values for the shipped embedder
    assert near == pytest.approx(0.9636241116594317, abs=1e-9)
    assert far == pytest.approx(0.14824986333222026, abs=1e-9)
    assert near > far


def test_max_similarity_picks_first_best():
    e = embed("run")
    score, idx = max_similarity(e, [embed("sit"), e, e])
    assert idx == 1 and score == pytest.approx(1.0)


def test_custom_dimension():
    assert HashedNgramEmbedder(dim=64).embed("walk").shape == (64,)


@given(st.text(max_size=80), st.text(max_size=80))
def test_cosine_is_symmetric_and_bounded(s, t):
    c = cosine(embed(s), embed(t))
    assert c == pytest.approx(cosine(embed(t), embed(s)))
    assert -1 - 1e-9 <= c <= 1 + 1e-9
