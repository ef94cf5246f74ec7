"""CCU/CEU pairing: semi-orthogonal CCU selection plus a one-to-one matching game."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .config import SystemConfig

log = logging.getLogger(__name__)

_TINY = 1e-12


@dataclass(frozen=True)
class PairingPolicy:
    """One-to-one CCU-CEU assignment; pair ``l`` is ``pairs[l]``."""

    pairs: tuple[tuple[int, int], ...]
    method: str = "sus-mg"

    def __post_init__(self):
        ccus = [u for u, _ in self.pairs]
        ceus = [v for _, v in self.pairs]
        if len(set(ccus)) != len(ccus) or len(set(ceus)) != len(ceus):
            raise ValueError(f"not a perfect matching: {self.pairs}")
        if set(ccus) & set(ceus):
            raise ValueError(f"a user appears on both sides: {self.pairs}")

    @property
    def ccus(self) -> list[int]:
        return [u for u, _ in self.pairs]

    @property
    def ceus(self) -> list[int]:
        return [v for _, v in self.pairs]

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class SusTrace:
    """Per-round record of the selection, used to audit semi-orthogonality."""

    selected: list[int] = field(default_factory=list)
    directions: list[np.ndarray] = field(default_factory=list)
    pools: list[list[int]] = field(default_factory=list)
    admitted: list[list[int]] = field(default_factory=list)  # pool left after round j's filter
    filled: list[int] = field(default_factory=list)


def projection_ratio(h_u: np.ndarray, g: np.ndarray) -> float:
    """``|h_u^H g| / (||h_u|| ||g||)``; zero when either vector vanishes."""
    den = np.linalg.norm(h_u) * np.linalg.norm(g)
    if den <= _TINY:
        return 0.0
    return float(abs(np.vdot(h_u, g)) / den)


def sus_select(ch: ChannelSet, config: SystemConfig,
               trace: SusTrace | None = None) -> tuple[list[int], list[int]]:
    """Pick K/2 CCUs greedily by residual norm under the semi-orthogonality gate.

    Returns ``(ccus, ceus)``; CCUs in selection order, CEUs in index order.
    If the candidate pool empties early, remaining CCU slots go to the
    unselected users with the largest ``||h||``.
    """
    K, N, U = ch.K, ch.N, config.K // 2
    if U > N:
        log.warning("K/2=%d exceeds N=%d; CCU channels cannot all be semi-orthogonal", U, N)
    trace = trace if trace is not None else SusTrace()
    h = ch.h
    pool = list(range(K))
    selected: list[int] = []
    basis: list[np.ndarray] = []
    j = 1
    while j <= N and pool and len(selected) < U:
        trace.pools.append(list(pool))
        best, best_norm = None, _TINY
        best_g = None
        for u in pool:
            g = h[u].astype(complex)
            for b in basis:
                g = g - (np.vdot(b, h[u]) / np.vdot(b, b).real) * b
            norm = np.linalg.norm(g)
            if norm > best_norm:
                best, best_norm, best_g = u, norm, g
        if best is None:
            break
        selected.append(best)
        basis.append(best_g)
        trace.selected.append(best)
        trace.directions.append(best_g)
        pool = [u for u in pool if u != best and projection_ratio(h[u], best_g) < config.theta]
        trace.admitted.append(list(pool))
        j += 1

    if len(selected) < U:
        rest = [k for k in ch.users_by_gain() if k not in selected]
        fill = rest[: U - len(selected)]
        selected.extend(fill)
        trace.filled.extend(fill)
    ceus = sorted(k for k in range(K) if k not in selected)
    return selected, ceus


@dataclass(frozen=True)
class PreferenceProfile:
    """CEU preference lists over CCUs and the utility matrix behind them.

    ``utility[i, j]`` is the utility of pairing ``ccus[i]`` with ``ceus[j]``.
    """

    ccus: tuple[int, ...]
    ceus: tuple[int, ...]
    utility: np.ndarray
    lists: dict[int, tuple[int, ...]]

    @classmethod
    def from_utility(cls, utility, ccus=None, ceus=None) -> "PreferenceProfile":
        utility = np.asarray(utility, dtype=float)
        ccus = tuple(range(utility.shape[0])) if ccus is None else tuple(ccus)
        # default ids: CCUs 0..U-1, CEUs numbered after them
        ceus = tuple(range(len(ccus), len(ccus) + utility.shape[1])) if ceus is None else tuple(ceus)
        lists = {}
        for j, v in enumerate(ceus):
            col = utility[:, j]
            order = sorted(range(len(ccus)), key=lambda i: (-col[i], ccus[i]))
            lists[v] = tuple(ccus[i] for i in order)
        return cls(ccus=ccus, ceus=ceus, utility=utility, lists=lists)

    def value(self, u: int, v: int) -> float:
        return float(self.utility[self.ccus.index(u), self.ceus.index(v)])


def build_preferences(ch: ChannelSet, ccus, ceus) -> PreferenceProfile:
    """Utility of (u, v) is the cross-link magnitude ``|h_{v,u}|``."""
    ccus, ceus = list(ccus), list(ceus)
    if set(ccus) & set(ceus):
        raise ValueError("CCU and CEU sets must be disjoint")
    utility = np.abs(ch.h_cross[np.ix_(ccus, ceus)])
    return PreferenceProfile.from_utility(utility, ccus, ceus)


def matching_game(prefs: PreferenceProfile) -> PairingPolicy:
    """CEU-proposing deferred acceptance.

    A CCU holds its best proposal so far and trades up only on strictly
    larger utility. Pairs are returned in ``prefs.ccus`` order.
    """
    if len(prefs.ccus) != len(prefs.ceus):
        raise ValueError("both sides must have the same size")
    next_choice = {v: 0 for v in prefs.ceus}
    held: dict[int, int] = {}
    free = list(prefs.ceus)
    while free:
        v = free.pop(0)
        u = prefs.lists[v][next_choice[v]]
        next_choice[v] += 1
        current = held.get(u)
        if current is None:
            held[u] = v
        elif prefs.value(u, v) > prefs.value(u, current):
            held[u] = v
            free.append(current)
        else:
            free.append(v)
    return PairingPolicy(tuple((u, held[u]) for u in prefs.ccus), method="sus-mg")


def blocking_pairs(prefs: PreferenceProfile, pairing: PairingPolicy) -> list[tuple[int, int]]:
    """All (u, v) that both prefer each other to their assigned partners."""
    partner_of_u = dict(pairing.pairs)
    partner_of_v = {v: u for u, v in pairing.pairs}
    out = []
    for u in prefs.ccus:
        for v in prefs.ceus:
            if partner_of_u[u] == v:
                continue
            u_gains = prefs.value(u, v) > prefs.value(u, partner_of_u[u])
            v_gains = prefs.value(u, v) > prefs.value(partner_of_v[v], v)
            if u_gains and v_gains:
                out.append((u, v))
    return out


def sus_mg_pairing(ch: ChannelSet, config: SystemConfig) -> PairingPolicy:
    """Full pairing pipeline: CCU selection, preferences, matching."""
    ccus, ceus = sus_select(ch, config)
    return matching_game(build_preferences(ch, ccus, ceus))


def random_pairing(ch: ChannelSet, config: SystemConfig, rng: np.random.Generator) -> PairingPolicy:
    """Uniformly random half/half split followed by a uniformly random matching."""
    perm = rng.permutation(ch.K)
    U = ch.K // 2
    ccus, ceus = perm[:U], perm[U:]
    return PairingPolicy(tuple((int(u), int(v)) for u, v in zip(ccus, ceus)), method="random")
