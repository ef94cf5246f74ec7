import numpy as np
import pytest

from crsma.baselines import (FIXED, NOT_APPLICABLE, OPTIMIZED, SCHEMES, SchemeResult, SchemeSpec,
                             evaluate_scheme, get_scheme, mean_sum_rate, rescore)
from crsma.channel import generate_channels, mrc_coefficients
from crsma.config import SystemConfig
from crsma.pairing import sus_mg_pairing
from crsma.rates import build_link_model, evaluate
from crsma.sca import delta_search, sca_solve
from crsma.streams import DIRECT, RELAY, SUB, StreamId, StreamPlan, gain_order, make_decoding_order


def single_pair(seed=1, **kw):
    cfg = SystemConfig(**{"K": 2, "N": 4, "sigma2": 0.1, **kw})
    ch = generate_channels(cfg, seed=seed)
    return cfg, ch, mrc_coefficients(ch, cfg), sus_mg_pairing(ch, cfg)


# cooperative pairs carry n_sub + 2 n_ceu streams (direct and relay per CEU sub-message)
@pytest.mark.parametrize("scheme,streams", [
    ("scheme-1", 16), ("scheme-2", 18), ("scheme-3", 12), ("scheme-4", 9),
    ("scheme-5", 12), ("scheme-6", 11), ("noma-susmg", 6), ("rsma-susmg", 11),
])
def test_stream_counts(scheme, streams):
    pairing = sus_mg_pairing(generate_channels(SystemConfig(), seed=0), SystemConfig())
    plan = get_scheme(scheme).plan(pairing)
    assert len(plan.streams) == streams


def test_noncooperative_plans_have_no_relays():
    pairing = sus_mg_pairing(generate_channels(SystemConfig(), seed=0), SystemConfig())
    for name in ("scheme-5", "scheme-6", "noma-susmg"):
        assert all(s.kind != RELAY for s in get_scheme(name).plan(pairing).streams)
    kinds = {s.kind for s in get_scheme("scheme-3").plan(pairing).streams}
    assert kinds == {SUB, RELAY, DIRECT}


def test_scheme_registry():
    assert get_scheme("crsma-susmg").delta_policy == OPTIMIZED
    assert get_scheme("cnoma-susmg-fixed-delta").delta_policy == FIXED
    assert get_scheme("rsma-susmg").delta_policy == NOT_APPLICABLE
    assert get_scheme("crsma-random").pairing == "random"
    assert all(SCHEMES[k].id == k for k in SCHEMES)
    with pytest.raises(ValueError):
        get_scheme("scheme-7")


@pytest.mark.parametrize("kwargs", [
    dict(id="x", split="scheme-9", cooperative=True, delta_policy=OPTIMIZED),
    dict(id="x", split="scheme-3", cooperative=True, delta_policy=NOT_APPLICABLE),
    dict(id="x", split="scheme-5", cooperative=False, delta_policy=FIXED),
    dict(id="x", split="scheme-4", cooperative=True, delta_policy=FIXED, order="gain"),
])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SchemeSpec(**kwargs)


def test_cnoma_equals_crsma_with_second_sub_message_silent():
    cfg, ch, co, pairing = single_pair()
    rs = StreamPlan.crsma(pairing)
    no = get_scheme("scheme-4").plan(pairing)
    rng = np.random.default_rng(0)
    p1, pr, pv = rng.uniform(0.01, 0.1, 3)
    power = {StreamId(SUB, 0, 1): p1, StreamId(SUB, 0, 2): 0.0,
             StreamId(RELAY, 0, 1): pr, StreamId(DIRECT, 0, 1): pv}
    for label in ("order-1", "order-2", "order-3"):
        m_rs = build_link_model(rs, co, make_decoding_order(label, rs))
        m_no = build_link_model(no, co, make_decoding_order(label, no))
        a = evaluate(m_rs, np.array([power[s] for s in m_rs.streams]), 0.4)
        b = evaluate(m_no, np.array([power[s] for s in m_no.streams]), 0.4)
        assert a.r_u == pytest.approx(b.r_u) and a.r_v == pytest.approx(b.r_v)


def test_rate_splitting_never_loses_to_cnoma_at_the_same_split():
    cfg, ch, co, pairing = single_pair(seed=3)
    rs = sca_solve(StreamPlan.crsma(pairing), co, cfg, 0.5)
    no = sca_solve(get_scheme("scheme-4").plan(pairing), co, cfg, 0.5)
    assert rs.ok and no.ok
    assert rs.objective >= no.objective - 1e-3


def test_noma_two_users_huge_budget_direct_rate():
    cfg, ch, co, pairing = single_pair(seed=2, p_u_max=60.0, p_v_max=60.0)
    res = evaluate_scheme("noma-susmg", ch, cfg)
    assert res.feasible and res.delta == 1.0
    plan = get_scheme("noma-susmg").plan(pairing)
    order = gain_order(plan, co.self_gain)
    u, v = pairing.pairs[0]
    p = {s: res.outcome.powers.get(s) for s in plan.streams}
    pu, pv = p[StreamId(SUB, 0, 1)], p[StreamId(DIRECT, 0, 1)]
    # the CEU stream sees the CCU stream only if the CCU is decoded later
    later = order.sequence.index(StreamId(SUB, 0, 1)) > order.sequence.index(StreamId(DIRECT, 0, 1))
    interf = co.cross_gain[v, u] * pu if later else 0.0
    expected = np.log2(1 + co.self_gain[v] * pv / (interf + co.noise_gain[v]))
    assert res.report.r_v[v] == pytest.approx(expected, rel=1e-9)
    assert res.report.sum_rate == pytest.approx(res.report.r_u[u] + expected, rel=1e-9)


def test_noncooperative_reports_full_frame_and_fixed_reports_half():
    cfg = SystemConfig(sigma2=0.1)
    ch = generate_channels(cfg, seed=4)
    assert evaluate_scheme("rsma-susmg", ch, cfg).delta == 1.0
    res = evaluate_scheme("cnoma-susmg-fixed-delta", ch, cfg)
    assert (res.delta == 0.5) if res.feasible else res.delta is None


def test_crsma_matches_direct_delta_search():
    cfg = SystemConfig(sigma2=0.1)
    ch = generate_channels(cfg, seed=5)
    res = evaluate_scheme("crsma-susmg", ch, cfg)
    co = mrc_coefficients(ch, cfg)
    d, out = delta_search(StreamPlan.crsma(sus_mg_pairing(ch, cfg)), co, cfg,
                          make_decoding_order("order-3", sus_mg_pairing(ch, cfg)))
    assert res.delta == d and res.sum_rate == pytest.approx(out.objective, abs=1e-3)


def test_random_pairing_needs_rng_and_is_reproducible():
    cfg = SystemConfig(sigma2=0.1)
    ch = generate_channels(cfg, seed=6)
    with pytest.raises(ValueError):
        evaluate_scheme("crsma-random", ch, cfg)
    a = evaluate_scheme("crsma-random", ch, cfg, rng=np.random.default_rng(3))
    b = evaluate_scheme("crsma-random", ch, cfg, rng=np.random.default_rng(3))
    assert a.pairing.pairs == b.pairing.pairs and a.sum_rate == b.sum_rate


def test_infeasible_results_count_as_zero():
    cfg = SystemConfig(sigma2=0.1, r_th_u=50.0)
    ch = generate_channels(cfg, seed=0)
    res = evaluate_scheme("crsma-susmg", ch, cfg)
    assert not res.feasible and res.sum_rate == 0.0 and res.delta is None
    dummy = SchemeResult("x", res.pairing, None, None, 0, "infeasible")
    assert mean_sum_rate([dummy, res]) == 0.0
    assert np.isnan(mean_sum_rate([]))


def test_rescore_matches_a_fresh_evaluation_in_that_mode():
    cfg = SystemConfig(sigma2=0.1)
    ch = generate_channels(cfg, seed=7)
    static = evaluate_scheme("crsma-susmg", ch, cfg, "order-1")
    direct = evaluate_scheme("crsma-susmg", ch, cfg, "order-1", mode="sic-global")
    again = rescore(static, ch, cfg, "sic-global", "order-1")
    assert again.sum_rate == pytest.approx(direct.sum_rate, rel=1e-9)
    assert again.outcome is static.outcome
