"""Achievable rates for a pairing, power allocation, slot split and decoding order.

Every decoded stream is a *link*: a receiver looking at one stream through
``SINR = sig * P_s / (C @ P + noise)``. The link model fixes ``sig``, ``C``
and ``noise`` for a given plan, order and interference mode; rate
evaluation and the SCA program are both built on it, so they can never
disagree about who interferes with whom.

Interference modes:

``static-ipi``
    Streams of other pairs always interfere at full power; inside a pair
    a stream sees only same-pair streams decoded after it.
``sic-global``
    Any stream already decoded, in any pair, has been cancelled.

DT-phase links (CEU to BS, CEU to its CCU) are identical in both modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import MrcCoefficients
from .pairing import PairingPolicy
from .streams import (DIRECT, RELAY, SUB, DecodingOrder, PowerAllocation,
                      StreamId, StreamPlan, make_decoding_order)

MODES = ("static-ipi", "sic-global")
CT, DT, FULL = "ct", "dt", "full"

# link roles; values name the (rate, slack) auxiliary pair of the SCA program
ROLE_AUX = {
    "sub": ("alpha", "gamma"),
    "relay": ("beta", "mu"),
    "direct_bs": ("beta", "mu"),
    "direct_ccu": ("omega", "eta"),
    "direct": ("beta", "mu"),
}


@dataclass(frozen=True)
class Link:
    role: str
    stream: StreamId
    phase: str
    receiver: int | None = None  # CCU index for relay-side decoding, None for the BS


@dataclass(frozen=True)
class RateTerm:
    """One optimisable rate share: a whole CCU, or one CEU sub-message.

    The share's rate is the minimum over ``expressions`` of the weighted sum
    of its links' rates (a CEU is capped by what its CCU could decode).
    """

    user: int
    part: int
    is_ccu: bool
    expressions: tuple[tuple[int, ...], ...]


@dataclass
class LinkModel:
    plan: StreamPlan
    order: DecodingOrder
    mode: str
    streams: list[StreamId]
    owners: np.ndarray
    links: list[Link]
    stream_of_link: np.ndarray
    sig: np.ndarray
    C: np.ndarray
    noise: np.ndarray
    terms: list[RateTerm]
    ccus: list[int]
    ceus: list[int]

    def weights(self, delta: float) -> np.ndarray:
        w = {CT: 1.0 - delta, DT: delta, FULL: 1.0}
        return np.array([w[link.phase] for link in self.links])

    def sinr(self, P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        return self.sig * P[self.stream_of_link] / (self.C @ P + self.noise)

    def link_rates(self, P: np.ndarray, delta: float) -> np.ndarray:
        return self.weights(delta) * np.log2(1.0 + self.sinr(P))

    def budget_rows(self) -> dict[int, list[int]]:
        rows: dict[int, list[int]] = {}
        for i, k in enumerate(self.owners):
            rows.setdefault(int(k), []).append(i)
        return rows

    def power_vector(self, pa: PowerAllocation) -> np.ndarray:
        return np.array([pa.get(s) for s in self.streams])


def _gain(coeffs: MrcCoefficients, k: int, j: int) -> float:
    return float(coeffs.cross_gain[k, j])


def build_link_model(plan: StreamPlan, coeffs: MrcCoefficients,
                     order: DecodingOrder | None = None, mode: str = "static-ipi",
                     drop_users=()) -> LinkModel:
    """Assemble links, interference matrix and rate terms.

    Streams of users in ``drop_users`` (zero budget) are left out entirely.
    """
    if mode not in MODES:
        raise ValueError(f"unknown interference mode {mode!r}")
    order = order or make_decoding_order("order-3", plan)
    order.check(plan)
    drop = set(drop_users)
    streams = [s for s in plan.streams if plan.owner(s) not in drop]
    index = {s: i for i, s in enumerate(streams)}
    owners = np.array([plan.owner(s) for s in streams], dtype=int)
    pos = order.position()
    S = len(streams)

    links: list[Link] = []
    sig, rows, noise = [], [], []

    def bs_stream(s: StreamId) -> bool:
        return s.kind in (SUB, RELAY) if plan.cooperative else True

    def add(link: Link, signal: float, row: np.ndarray, n: float):
        links.append(link)
        sig.append(signal)
        rows.append(row)
        noise.append(n)

    for s in streams:
        k = plan.owner(s)
        if bs_stream(s):
            row = np.zeros(S)
            for t in streams:
                if t == s or not bs_stream(t):
                    continue
                later = pos[t] > pos[s]
                if mode == "sic-global":
                    hit = later
                else:
                    hit = t.pair != s.pair or later
                if hit:
                    row[index[t]] = _gain(coeffs, k, plan.owner(t))
            if plan.cooperative:
                role = s.kind
                phase = CT
            else:
                role = SUB if s.kind == SUB else DIRECT
                phase = FULL
            add(Link(role, s, phase), float(coeffs.self_gain[k]), row, float(coeffs.noise_gain[k]))

    if plan.cooperative:
        for s in streams:
            if s.kind != DIRECT:
                continue
            v, u = plan.owner(s), plan.ccu(s.pair)
            row_bs, row_ccu = np.zeros(S), np.zeros(S)
            for t in streams:
                if t.kind != DIRECT or t == s:
                    continue
                if t.pair != s.pair:
                    row_bs[index[t]] = _gain(coeffs, v, plan.owner(t))
                    row_ccu[index[t]] = coeffs.link_gain[plan.owner(t), u]
                elif t.part > s.part:
                    row_bs[index[t]] = coeffs.self_gain[v]
                    row_ccu[index[t]] = coeffs.link_gain[v, u]
            add(Link("direct_bs", s, DT), float(coeffs.self_gain[v]), row_bs, float(coeffs.noise_gain[v]))
            add(Link("direct_ccu", s, DT, receiver=u), float(coeffs.link_gain[v, u]), row_ccu,
                float(coeffs.sigma2))

    link_index = {(link.role, link.stream): i for i, link in enumerate(links)}
    terms: list[RateTerm] = []
    for l in range(plan.L):
        u, v = plan.ccu(l), plan.ceu(l)
        if u not in drop:
            subs = tuple(link_index[(SUB, StreamId(SUB, l, b))] for b in range(1, plan.n_sub[l] + 1))
            terms.append(RateTerm(u, 0, True, (subs,)))
        else:
            terms.append(RateTerm(u, 0, True, ((),)))
        for c in range(1, plan.n_ceu[l] + 1):
            d = StreamId(DIRECT, l, c)
            if plan.cooperative:
                r = StreamId(RELAY, l, c)
                total = tuple(i for i in (link_index.get(("direct_bs", d)), link_index.get((RELAY, r)))
                              if i is not None)
                limit = tuple(i for i in (link_index.get(("direct_ccu", d)),) if i is not None)
                terms.append(RateTerm(v, c, False, (total, limit)))
            else:
                only = tuple(i for i in (link_index.get((DIRECT, d)),) if i is not None)
                terms.append(RateTerm(v, c, False, (only,)))

    L = len(links)
    return LinkModel(
        plan=plan,
        order=order,
        mode=mode,
        streams=streams,
        owners=owners,
        links=links,
        stream_of_link=np.array([index[link.stream] for link in links], dtype=int),
        sig=np.array(sig, dtype=float),
        C=np.array(rows, dtype=float).reshape(L, S),
        noise=np.array(noise, dtype=float),
        terms=terms,
        ccus=plan.pairing.ccus,
        ceus=plan.pairing.ceus,
    )


@dataclass
class RateReport:
    """Per-user rates in bps/Hz.

    ``r_v = min(r_v_tot, r_v_relay_limit)`` for unsplit cooperative CEUs;
    with two CEU sub-messages the minimum is taken per sub-message and
    summed. Non-cooperative CEUs have an infinite relay limit.
    """

    r_u: dict[int, float]
    r_v_tot: dict[int, float]
    r_v_relay_limit: dict[int, float]
    r_v: dict[int, float]
    sum_rate: float
    feasible: dict[int, bool]
    link_rates: dict[tuple[str, StreamId], float] = field(default_factory=dict)
    sinr: dict[tuple[str, StreamId], float] = field(default_factory=dict)

    @property
    def all_feasible(self) -> bool:
        return all(self.feasible.values())

    def user_rates(self) -> dict[int, float]:
        return {**self.r_u, **self.r_v}


def evaluate(model: LinkModel, P: np.ndarray, delta: float,
             r_th_u: float = 0.0, r_th_v: float = 0.0, tol: float = 1e-6) -> RateReport:
    """Rate report for the power vector ``P`` (ordered as ``model.streams``)."""
    x = model.sinr(P) if len(model.links) else np.zeros(0)
    rates = model.weights(delta) * np.log2(1.0 + x) if len(model.links) else np.zeros(0)
    r_u: dict[int, float] = {}
    r_tot: dict[int, float] = {}
    r_lim: dict[int, float] = {}
    r_v: dict[int, float] = {}
    for term in model.terms:
        sums = [float(sum(rates[i] for i in expr)) for expr in term.expressions]
        if term.is_ccu:
            r_u[term.user] = sums[0]
            continue
        r_tot[term.user] = r_tot.get(term.user, 0.0) + sums[0]
        lim = sums[1] if len(sums) > 1 else math.inf
        r_lim[term.user] = r_lim.get(term.user, 0.0) + lim
        r_v[term.user] = r_v.get(term.user, 0.0) + min(sums[0], lim)
    feasible = {u: r >= r_th_u - tol for u, r in r_u.items()}
    feasible.update({v: r >= r_th_v - tol for v, r in r_v.items()})
    keys = [(link.role, link.stream) for link in model.links]
    return RateReport(
        r_u=r_u,
        r_v_tot=r_tot,
        r_v_relay_limit=r_lim,
        r_v=r_v,
        sum_rate=float(sum(r_u.values()) + sum(r_v.values())),
        feasible=feasible,
        link_rates=dict(zip(keys, map(float, rates))),
        sinr=dict(zip(keys, map(float, x))),
    )


def _as_plan(plan: StreamPlan | PairingPolicy) -> StreamPlan:
    return StreamPlan.crsma(plan) if isinstance(plan, PairingPolicy) else plan


def rates_at_bs(plan: StreamPlan | PairingPolicy, pa: PowerAllocation, coeffs: MrcCoefficients,
                order: DecodingOrder | None = None, mode: str = "static-ipi",
                r_th_u: float = 0.0, r_th_v: float = 0.0) -> RateReport:
    """Full rate report; QoS violations are flagged in ``feasible``, never raised."""
    plan = _as_plan(plan)
    model = build_link_model(plan, coeffs, order, mode)
    return evaluate(model, model.power_vector(pa), pa.delta, r_th_u, r_th_v)


def rate_ceu_at_ccu(plan: StreamPlan | PairingPolicy, pair: int, pa: PowerAllocation,
                    coeffs: MrcCoefficients) -> float:
    """DT-phase rate at which the CCU of ``pair`` decodes its CEU (summed over
    CEU sub-messages, decoded in part order)."""
    plan = _as_plan(plan)
    model = build_link_model(plan, coeffs)
    P = model.power_vector(pa)
    rates = model.link_rates(P, pa.delta)
    return float(sum(r for r, link in zip(rates, model.links)
                     if link.role == "direct_ccu" and link.stream.pair == pair))
