import itertools

import numpy as np
import pytest

from crsma.channel import ChannelSet, generate_channels
from crsma.config import SystemConfig
from crsma.pairing import (PairingPolicy, PreferenceProfile, SusTrace, blocking_pairs,
                           build_preferences, matching_game, projection_ratio, random_pairing,
                           sus_mg_pairing, sus_select)


def _channels(h, h_cross=None):
    h = np.asarray(h, dtype=complex)
    K = h.shape[0]
    hc = np.zeros((K, K), complex) if h_cross is None else np.asarray(h_cross, complex)
    return ChannelSet(h, hc, np.ones(K))


def stable_matchings(utility):
    """Every perfect matching without a blocking pair, by enumeration."""
    n = utility.shape[0]
    out = []
    for perm in itertools.permutations(range(n)):  # CCU i gets CEU perm[i]
        owner = {perm[i]: i for i in range(n)}
        blocked = any(
            utility[i, j] > utility[i, perm[i]] and utility[i, j] > utility[owner[j], j]
            for i in range(n) for j in range(n) if perm[i] != j
        )
        if not blocked:
            out.append(perm)
    return out


def test_perfect_matching_enforced():
    with pytest.raises(ValueError):
        PairingPolicy(((0, 1), (0, 2)))
    with pytest.raises(ValueError):
        PairingPolicy(((0, 1), (2, 1)))
    with pytest.raises(ValueError):
        PairingPolicy(((0, 1), (1, 2)))


def test_sus_orthogonal_pair_tie_goes_to_lower_id():
    ch = _channels([[1, 0], [0, 1]])
    trace = SusTrace()
    ccus, ceus = sus_select(ch, SystemConfig(K=2, N=2, theta=0.4), trace)
    assert ccus == [0] and ceus == [1]
    assert trace.admitted[0] == [1]
    assert projection_ratio(ch.h[1], trace.directions[0]) == 0.0


def test_sus_collinear_user_filtered():
    ch = _channels([[2, 0], [1.99, 0]])
    trace = SusTrace()
    ccus, ceus = sus_select(ch, SystemConfig(K=2, N=2), trace)
    assert ccus == [0] and ceus == [1]
    assert trace.admitted[0] == []


def test_sus_first_pick_is_largest_norm():
    cfg = SystemConfig()
    for s in range(20):
        ch = generate_channels(cfg, seed=s)
        ccus, _ = sus_select(ch, cfg)
        assert ccus[0] == int(np.argmax(ch.norms2()))


def test_sus_fallback_fills_by_norm():
    # all users collinear: only one survives the gate, the rest come from the norm ranking
    h = np.outer([3.0, 1.0, 2.0, 0.5], [1, 0])
    ch = _channels(h)
    trace = SusTrace()
    ccus, ceus = sus_select(ch, SystemConfig(K=4, N=2), trace)
    assert ccus == [0, 2] and ceus == [1, 3]
    assert trace.filled == [2]


def test_sus_semi_orthogonality_audit():
    cfg = SystemConfig()
    for s in range(50):
        trace = SusTrace()
        ch = generate_channels(cfg, seed=s)
        sus_select(ch, cfg, trace)
        for j, admitted in enumerate(trace.admitted):
            for u in admitted:
                for g in trace.directions[: j + 1]:
                    assert projection_ratio(ch.h[u], g) < cfg.theta


def test_preferences_sorted_descending():
    hc = np.zeros((3, 3), complex)
    hc[0, 2] = hc[2, 0] = 0.3
    hc[1, 2] = hc[2, 1] = 0.9
    prefs = build_preferences(_channels(np.eye(3), hc), [0, 1], [2])
    assert prefs.lists[2] == (1, 0)
    assert prefs.value(1, 2) == pytest.approx(0.9)


def test_preferences_ties_by_id():
    prefs = PreferenceProfile.from_utility(np.ones((3, 2)), ccus=[4, 1, 2], ceus=[0, 3])
    assert prefs.lists[0] == (1, 2, 4)


def test_preferences_against_sort_oracle():
    rng = np.random.default_rng(0)
    u = rng.random((3, 3))
    prefs = PreferenceProfile.from_utility(u)
    for j in range(3):
        assert list(prefs.lists[3 + j]) == list(np.argsort(-u[:, j], kind="stable"))


def test_matching_unique_mutual_maxima():
    pol = matching_game(PreferenceProfile.from_utility([[0.9, 0.1], [0.2, 0.8]]))
    assert set(pol.pairs) == {(0, 2), (1, 3)}


def test_matching_single_rejection():
    pol = matching_game(PreferenceProfile.from_utility([[0.9, 0.8], [0.1, 0.2]]))
    assert set(pol.pairs) == {(0, 2), (1, 3)}


def test_matching_equals_enumeration_3x3():
    rng = np.random.default_rng(5)
    for _ in range(200):
        u = rng.random((3, 3))
        pol = matching_game(PreferenceProfile.from_utility(u))
        perm = tuple(dict(pol.pairs)[i] - 3 for i in range(3))
        assert perm in stable_matchings(u)
        assert not blocking_pairs(PreferenceProfile.from_utility(u), pol)


def test_matching_scale_invariant():
    rng = np.random.default_rng(9)
    u = rng.random((4, 4))
    a = matching_game(PreferenceProfile.from_utility(u))
    b = matching_game(PreferenceProfile.from_utility(7.5 * u))
    assert a.pairs == b.pairs


def test_sus_mg_is_perfect_matching():
    cfg = SystemConfig()
    for s in range(30):
        pol = sus_mg_pairing(generate_channels(cfg, seed=s), cfg)
        assert len(pol) == 3
        assert sorted(pol.ccus + pol.ceus) == list(range(6))


def test_random_pairing_small_cases():
    cfg = SystemConfig(K=2, N=2)
    ch = _channels(np.eye(2))
    pol = random_pairing(ch, cfg, np.random.default_rng(0))
    assert len(pol) == 1 and set(pol.pairs[0]) == {0, 1}
    cfg4 = SystemConfig(K=4, N=2)
    ch4 = _channels(np.ones((4, 2)))
    a = random_pairing(ch4, cfg4, np.random.default_rng(3))
    b = random_pairing(ch4, cfg4, np.random.default_rng(3))
    assert a.pairs == b.pairs and a.method == "random"


def test_random_pairing_uniform():
    cfg = SystemConfig()
    ch = _channels(np.ones((6, 8)))
    rng = np.random.default_rng(1)
    n = 10_000
    counts = np.zeros((6, 6))
    for _ in range(n):
        for u, v in random_pairing(ch, cfg, rng).pairs:
            counts[u, v] += 1
    # P(u is a CCU) * P(v is a CEU given that) * P(they are matched) = 1/2 * 3/5 * 1/3
    p = 0.1
    sigma = np.sqrt(n * p * (1 - p))
    off = ~np.eye(6, dtype=bool)
    assert np.all(np.abs(counts[off] - n * p) < 3 * sigma)
    assert np.all(counts[~off] == 0)
