from hypothesis import given, settings, strategies as st

from har_guard.automaton import AhoCorasick, Match, naive_find_all

alpha = st.text(alphabet="abc ", max_size=200)
pats = st.lists(st.text(alphabet="abc ", min_size=1, max_size=5), max_size=10)


def test_classic_example():
    got = sorted(AhoCorasick(["he", "she", "his", "hers"]).find_all("ushers"))
    assert got == [Match(1, 4, "she"), Match(2, 4, "he"), Match(2, 6, "hers")]


def test_overlapping_and_nested_matches():
    got = sorted(AhoCorasick(["a", "aa", "aaa"]).find_all("aaa"))
    assert len(got) == 3 + 2 + 1


def test_empty_inputs():
    assert AhoCorasick([]).find_all("abc") == []
    assert AhoCorasick(["", "x"]).find_all("") == []


@settings(max_examples=200, deadline=None)
@given(alpha, pats)
def test_matches_naive_scanner(text, patterns):
    assert sorted(AhoCorasick(patterns).find_all(text)) == sorted(naive_find_all(text, patterns))
