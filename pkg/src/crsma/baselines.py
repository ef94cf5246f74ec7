"""Comparison schemes: pairing rule, message-splitting plan, cooperation and
slot-split policy for every competitor in the experiments.

Splitting schemes (cooperative unless noted):

* scheme-1: every user splits except the CEU of the last pair
* scheme-2: every user splits
* scheme-3: CCUs split, CEUs do not (the proposed C-RSMA structure)
* scheme-4: nobody splits (C-NOMA)
* scheme-5: every user splits, no cooperation (RSMA with 2K streams)
* scheme-6: as scheme-1 but without cooperation (RSMA with 2K-1 streams)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelSet, mrc_coefficients
from .config import SystemConfig
from .pairing import PairingPolicy, random_pairing, sus_mg_pairing
from .rates import RateReport, build_link_model, evaluate
from .sca import SocpOutcome, delta_search, sca_solve
from .streams import DecodingOrder, StreamPlan, gain_order, make_decoding_order

OPTIMIZED, FIXED, NOT_APPLICABLE = "optimized", "fixed", "not-applicable"


@dataclass(frozen=True)
class SchemeSpec:
    """How one competitor builds and optimizes its streams.

    ``split`` names the splitting recipe (see module docstring), ``pairing``
    is ``sus-mg`` or ``random`` and ``order`` is ``label`` (use the decoding
    order passed to :func:`evaluate_scheme`) or ``gain`` (NOMA convention).
    """

    id: str
    split: str
    cooperative: bool
    delta_policy: str
    pairing: str = "sus-mg"
    fixed_delta: float = 0.5
    order: str = "label"

    def __post_init__(self):
        if self.split not in _SPLITS:
            raise ValueError(f"unknown split recipe {self.split!r}")
        if self.cooperative == (self.delta_policy == NOT_APPLICABLE):
            raise ValueError("delta policy must be not-applicable exactly for non-cooperative schemes")
        if self.order == "gain" and self.cooperative:
            raise ValueError("gain order is only defined without cooperation")

    def plan(self, pairing: PairingPolicy) -> StreamPlan:
        n_sub, n_ceu = _SPLITS[self.split](len(pairing))
        return StreamPlan(pairing, n_sub, n_ceu, self.cooperative)


def _all(n):
    return lambda L: ((n,) * L, (n,) * L)


def _all_but_last_ceu(L):
    return (2,) * L, (2,) * (L - 1) + (1,)


_SPLITS = {
    "scheme-1": _all_but_last_ceu,
    "scheme-2": _all(2),
    "scheme-3": lambda L: ((2,) * L, (1,) * L),
    "scheme-4": _all(1),
    "scheme-5": _all(2),
    "scheme-6": _all_but_last_ceu,
}

SCHEMES: dict[str, SchemeSpec] = {
    s.id: s
    for s in (
        SchemeSpec("crsma-susmg", "scheme-3", True, OPTIMIZED),
        SchemeSpec("crsma-random", "scheme-3", True, OPTIMIZED, pairing="random"),
        SchemeSpec("cnoma-susmg-fixed-delta", "scheme-4", True, FIXED),
        SchemeSpec("rsma-susmg", "scheme-6", False, NOT_APPLICABLE),
        SchemeSpec("noma-susmg", "scheme-4", False, NOT_APPLICABLE, order="gain"),
        SchemeSpec("scheme-1", "scheme-1", True, OPTIMIZED),
        SchemeSpec("scheme-2", "scheme-2", True, OPTIMIZED),
        SchemeSpec("scheme-3", "scheme-3", True, OPTIMIZED),
        SchemeSpec("scheme-4", "scheme-4", True, OPTIMIZED),
        SchemeSpec("scheme-5", "scheme-5", False, NOT_APPLICABLE),
        SchemeSpec("scheme-6", "scheme-6", False, NOT_APPLICABLE),
    )
}


def get_scheme(name: str) -> SchemeSpec:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; known: {', '.join(SCHEMES)}") from None


@dataclass
class SchemeResult:
    """Outcome of one scheme on one network drop.

    ``report`` is ``None`` when no feasible allocation was found; ``delta``
    is 1.0 for non-cooperative schemes (the whole frame is one phase).
    """

    scheme: str
    pairing: PairingPolicy
    report: RateReport | None
    delta: float | None
    iterations: int
    status: str
    outcome: SocpOutcome | None = None

    @property
    def feasible(self) -> bool:
        return self.report is not None

    @property
    def sum_rate(self) -> float:
        return self.report.sum_rate if self.report is not None else 0.0


def _order_for(spec: SchemeSpec, plan: StreamPlan, label: str, coeffs) -> DecodingOrder:
    if spec.order == "gain":
        return gain_order(plan, coeffs.self_gain)
    return make_decoding_order(label, plan)


def evaluate_scheme(spec: SchemeSpec | str, ch: ChannelSet, config: SystemConfig,
                    order_label: str = "order-3", mode: str = "static-ipi",
                    rng: np.random.Generator | None = None) -> SchemeResult:
    """Pair, optimize powers (and the slot split if the scheme does) and
    report rates.

    Powers are always optimized under static inter-pair interference; ``mode``
    only selects how the final rates are evaluated. ``rng`` drives random
    pairing and is required for schemes that use it.
    """
    spec = get_scheme(spec) if isinstance(spec, str) else spec
    coeffs = mrc_coefficients(ch, config)
    if spec.pairing == "random":
        if rng is None:
            raise ValueError("random pairing needs an rng")
        pairing = random_pairing(ch, config, rng)
    else:
        pairing = sus_mg_pairing(ch, config)
    plan = spec.plan(pairing)
    order = _order_for(spec, plan, order_label, coeffs)

    if spec.delta_policy == OPTIMIZED:
        delta, out = delta_search(plan, coeffs, config, order)
    else:
        # non-cooperative links all carry weight 1, so the value passed is inert
        delta = spec.fixed_delta
        out = sca_solve(plan, coeffs, config, delta, order)
        if not spec.cooperative:
            delta = 1.0
    if not out.ok:
        return SchemeResult(spec.id, pairing, None, None, out.iterations, out.status, out)
    report = _report(plan, coeffs, order, mode, out, config)
    return SchemeResult(spec.id, pairing, report, delta, out.iterations, out.status, out)


def _report(plan, coeffs, order, mode, out: SocpOutcome, config: SystemConfig) -> RateReport:
    model = build_link_model(plan, coeffs, order, mode)
    P = model.power_vector(out.powers)
    return evaluate(model, P, out.powers.delta, config.r_th_u, config.r_th_v, tol=1e-4)


def rescore(result: SchemeResult, ch: ChannelSet, config: SystemConfig, mode: str,
            order_label: str = "order-3") -> SchemeResult:
    """Same optimized powers, rates re-evaluated in another interference mode."""
    if not result.feasible:
        return result
    spec = get_scheme(result.scheme)
    coeffs = mrc_coefficients(ch, config)
    plan = spec.plan(result.pairing)
    report = _report(plan, coeffs, _order_for(spec, plan, order_label, coeffs), mode,
                     result.outcome, config)
    return replace(result, report=report)


def mean_sum_rate(results) -> float:
    """Average sum rate with infeasible drops counted as zero."""
    results = list(results)
    return math.fsum(r.sum_rate for r in results) / len(results) if results else math.nan
