"""Stream bookkeeping: which streams exist, who sends them, and in what order
the BS decodes them.

A *plan* fixes the message-splitting structure of every pair. Cooperative
plans have two phases: CEUs broadcast their ``direct`` streams in the DT
phase, and in the CT phase each CCU sends its own ``sub`` streams plus one
``relay`` stream per CEU sub-message. Non-cooperative plans put every
``sub`` and ``direct`` stream into a single full-frame phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .pairing import PairingPolicy

SUB, RELAY, DIRECT = "sub", "relay", "direct"
ORDER_LABELS = ("order-1", "order-2", "order-3")


@dataclass(frozen=True, order=True)
class StreamId:
    """``sub`` = CCU sub-message, ``relay`` = CCU forwarding its CEU,
    ``direct`` = CEU's own transmission. ``part`` is the 1-based
    sub-message index."""

    kind: str
    pair: int
    part: int = 1

    def __str__(self) -> str:
        return f"{self.kind}{self.part}@{self.pair}"


@dataclass(frozen=True)
class StreamPlan:
    """Splitting structure for a pairing.

    ``n_sub[l]`` / ``n_ceu[l]`` give the number of sub-messages of the CCU
    and CEU of pair ``l``.
    """

    pairing: PairingPolicy
    n_sub: tuple[int, ...]
    n_ceu: tuple[int, ...]
    cooperative: bool = True

    def __post_init__(self):
        L = len(self.pairing)
        if len(self.n_sub) != L or len(self.n_ceu) != L:
            raise ValueError("split counts must have one entry per pair")
        if any(n not in (1, 2) for n in self.n_sub + self.n_ceu):
            raise ValueError("each user sends one or two sub-messages")

    @classmethod
    def crsma(cls, pairing: PairingPolicy) -> "StreamPlan":
        L = len(pairing)
        return cls(pairing, (2,) * L, (1,) * L, True)

    @property
    def L(self) -> int:
        return len(self.pairing)

    def ccu(self, pair: int) -> int:
        return self.pairing.pairs[pair][0]

    def ceu(self, pair: int) -> int:
        return self.pairing.pairs[pair][1]

    def owner(self, s: StreamId) -> int:
        return self.ceu(s.pair) if s.kind == DIRECT else self.ccu(s.pair)

    @property
    def streams(self) -> list[StreamId]:
        """All power-carrying streams, grouped by pair."""
        out = []
        for l in range(self.L):
            out += [StreamId(SUB, l, b) for b in range(1, self.n_sub[l] + 1)]
            if self.cooperative:
                out += [StreamId(RELAY, l, c) for c in range(1, self.n_ceu[l] + 1)]
            out += [StreamId(DIRECT, l, c) for c in range(1, self.n_ceu[l] + 1)]
        return out

    @property
    def shape_key(self) -> tuple:
        return (self.cooperative, self.n_sub, self.n_ceu)


@dataclass(frozen=True)
class DecodingOrder:
    """Total order over the BS-decoded streams.

    For cooperative plans every ``direct`` stream sits right after the
    ``relay`` stream carrying the same message; both belong to one message
    and are decoded together.
    """

    sequence: tuple[StreamId, ...]
    label: str = "custom"

    def position(self) -> dict[StreamId, int]:
        return {s: i for i, s in enumerate(self.sequence)}

    def check(self, plan: StreamPlan) -> None:
        expected = set(plan.streams)
        seq = list(self.sequence)
        if len(seq) != len(set(seq)) or set(seq) != expected:
            raise ValueError("decoding order must list every stream exactly once")
        if plan.cooperative:
            for i, s in enumerate(seq):
                if s.kind == DIRECT and (i == 0 or seq[i - 1] != StreamId(RELAY, s.pair, s.part)):
                    raise ValueError(f"{s} must follow its relay stream")


def _relay_groups(plan: StreamPlan, l: int) -> list[StreamId]:
    out = []
    for c in range(1, plan.n_ceu[l] + 1):
        if plan.cooperative:
            out.append(StreamId(RELAY, l, c))
        out.append(StreamId(DIRECT, l, c))
    return out


def _sub_layer(plan: StreamPlan, b: int) -> list[StreamId]:
    return [StreamId(SUB, l, b) for l in range(plan.L) if plan.n_sub[l] >= b]


def make_decoding_order(label: str, plan: StreamPlan | PairingPolicy) -> DecodingOrder:
    """The three heuristic orders, generalised to any split plan.

    order-1: relay/direct groups pair by pair, then every first CCU
    sub-message, then every second one. order-2: pair by pair, CCU
    sub-messages then relay/direct. order-3: CCU sub-message layers first,
    relay/direct groups last. Non-cooperative plans use the same recipes
    except that order-3 interleaves CEU sub-messages into the layers
    (layer ``b`` holds every stream whose part index is ``b``).
    """
    if isinstance(plan, PairingPolicy):
        plan = StreamPlan.crsma(plan)
    L = plan.L
    seq: list[StreamId] = []
    if label == "order-1":
        for l in range(L):
            seq += _relay_groups(plan, l)
        seq += _sub_layer(plan, 1) + _sub_layer(plan, 2)
    elif label == "order-2":
        for l in range(L):
            seq += [StreamId(SUB, l, b) for b in range(1, plan.n_sub[l] + 1)]
            seq += _relay_groups(plan, l)
    elif label == "order-3":
        if plan.cooperative:
            seq += _sub_layer(plan, 1) + _sub_layer(plan, 2)
            for l in range(L):
                seq += _relay_groups(plan, l)
        else:
            for b in (1, 2):
                seq += _sub_layer(plan, b)
                seq += [StreamId(DIRECT, l, b) for l in range(L) if plan.n_ceu[l] >= b]
    else:
        raise ValueError(f"unknown decoding order label {label!r}")
    order = DecodingOrder(tuple(seq), label)
    order.check(plan)
    return order


def gain_order(plan: StreamPlan, self_gain) -> DecodingOrder:
    """NOMA-style order: users by descending effective gain, each user's
    sub-messages consecutively. Non-cooperative plans only."""
    if plan.cooperative:
        raise ValueError("gain order is defined for non-cooperative plans")
    by_user: dict[int, list[StreamId]] = {}
    for s in plan.streams:
        by_user.setdefault(plan.owner(s), []).append(s)
    users = sorted(by_user, key=lambda k: (-float(self_gain[k]), k))
    seq = tuple(s for k in users for s in sorted(by_user[k], key=lambda s: s.part))
    order = DecodingOrder(seq, "gain")
    order.check(plan)
    return order


@dataclass
class PowerAllocation:
    """Per-stream transmit powers (watts) and the DT-phase fraction ``delta``."""

    powers: dict[StreamId, float] = field(default_factory=dict)
    delta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if any(p < 0 for p in self.powers.values()):
            raise ValueError("powers must be non-negative")

    @classmethod
    def crsma(cls, pairing: PairingPolicy, p_u1, p_u2, p_relay, p_v, delta: float) -> "PowerAllocation":
        """Build from per-pair power sequences of the base C-RSMA structure."""
        powers = {}
        for l in range(len(pairing)):
            powers[StreamId(SUB, l, 1)] = float(p_u1[l])
            powers[StreamId(SUB, l, 2)] = float(p_u2[l])
            powers[StreamId(RELAY, l, 1)] = float(p_relay[l])
            powers[StreamId(DIRECT, l, 1)] = float(p_v[l])
        return cls(powers, delta)

    def get(self, s: StreamId) -> float:
        return self.powers.get(s, 0.0)

    def user_totals(self, plan: StreamPlan) -> dict[int, float]:
        out: dict[int, float] = {}
        for s in plan.streams:
            k = plan.owner(s)
            out[k] = out.get(k, 0.0) + self.get(s)
        return out

    def p_ub(self, plan: StreamPlan) -> dict[tuple[int, int], float]:
        return {(plan.ccu(s.pair), s.part): self.get(s) for s in plan.streams if s.kind == SUB}

    def p_relay(self, plan: StreamPlan) -> dict[int, float]:
        out: dict[int, float] = {}
        for s in plan.streams:
            if s.kind == RELAY:
                out[plan.ccu(s.pair)] = out.get(plan.ccu(s.pair), 0.0) + self.get(s)
        return out

    def p_v(self, plan: StreamPlan) -> dict[int, float]:
        out: dict[int, float] = {}
        for s in plan.streams:
            if s.kind == DIRECT:
                out[plan.ceu(s.pair)] = out.get(plan.ceu(s.pair), 0.0) + self.get(s)
        return out

    def within_budget(self, plan: StreamPlan, pu_max: float, pv_max: float, tol: float = 1e-9) -> bool:
        ccus = set(plan.pairing.ccus)
        for k, total in self.user_totals(plan).items():
            if total > (pu_max if k in ccus else pv_max) + tol:
                return False
        return True
