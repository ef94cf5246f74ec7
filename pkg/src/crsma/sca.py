"""Power and slot allocation for a fixed pairing by successive convex approximation.

Each rate is lower-bounded through an SINR variable ``x`` and an
interference slack ``y``:

    y >= C @ P + noise,      x * y <= sig * P_s.

The bilinear product is restricted with the AGM bound
``2 x y <= (phi x)^2 + (y / phi)^2``, which turns it into a second-order
cone constraint for fixed ``phi``. After every solve ``phi`` moves to
``sqrt(y / x)``, where the bound is tight, so the previous solution stays
feasible and the objective cannot decrease. The slot split ``delta`` is
fixed per program and searched over a grid outside the SCA loop.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .channel import MrcCoefficients
from .config import SystemConfig
from .pairing import PairingPolicy
from .rates import ROLE_AUX, LinkModel, build_link_model, evaluate
from .streams import DecodingOrder, PowerAllocation, StreamPlan

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
PWL_SEGMENTS = 64
_X_FLOOR = 1e-12
_PHI_MAX = 1e8
OK_STATUSES = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)


def agm_upper_bound(x: float, y: float, a: float) -> float:
    """``(a x)^2 + (y / a)^2``, an upper bound on ``2 x y`` tight at ``a = sqrt(y / x)``."""
    if not np.all(np.asarray(a) > 0):
        raise ValueError(f"AGM scale must be positive, got {a}")
    return (a * x) ** 2 + (y / a) ** 2


@dataclass
class SurrogateState:
    """AGM scales, one per link of the link model."""

    phi: np.ndarray
    iteration: int = 0

    @classmethod
    def at_point(cls, x: np.ndarray, y: np.ndarray) -> "SurrogateState":
        return cls(phi_from(x, y))


def phi_from(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.maximum(np.asarray(x, dtype=float), _X_FLOOR)
    y = np.maximum(np.asarray(y, dtype=float), _X_FLOOR)
    return np.clip(np.sqrt(y / x), 1.0 / _PHI_MAX, _PHI_MAX)


def pwl_log2_segments(x_max: np.ndarray, segments: int = PWL_SEGMENTS):
    """Chords of ``log2(1 + x)`` on ``[0, x_max]``; their minimum is a concave
    lower envelope. Breakpoints are uniform in ``log(1 + x)``."""
    x_max = np.asarray(x_max, dtype=float)[:, None]
    grid = np.linspace(0.0, 1.0, segments + 1)[None, :]
    knots = np.expm1(grid * np.log1p(x_max))
    f = np.log2(1.0 + knots)
    slope = np.diff(f, axis=1) / np.maximum(np.diff(knots, axis=1), 1e-300)
    intercept = f[:, :-1] - slope * knots[:, :-1]
    return slope, intercept


class ConicProgram:
    """Parameterised surrogate program for one stream structure.

    Internally every power is a fraction of its owner's budget and every
    interference slack is measured in units of that link's noise, so the
    AGM constraint reads ``(a x)^2 + (b y)^2 <= p`` with ``p`` in [0, 1].
    The cvxpy problem is compiled once; instances, slot splits and AGM
    scales only change parameter values. ``solver`` names the backend.

    QoS rows carry an elastic slack that is pinned to zero unless
    :meth:`set_elastic` opens it; restoration uses it to reach a feasible
    point when the initial surrogate admits none.
    """

    def __init__(self, model: LinkModel, log_mode: str = "exp"):
        nl, ns, nt = len(model.links), len(model.streams), len(model.terms)
        self.log_mode = log_mode
        self.n_links, self.n_streams, self.n_terms = nl, ns, nt

        budget_owners = list(dict.fromkeys(int(k) for k in model.owners))
        self.budget_slots = budget_owners
        B = np.zeros((len(budget_owners), ns))
        for i, k in enumerate(model.owners):
            B[budget_owners.index(int(k)), i] = 1.0
        term_users = list(dict.fromkeys(t.user for t in model.terms))
        # positional: which QoS rows belong to CCUs (user ids change per instance)
        self.row_is_ccu = np.array([next(t.is_ccu for t in model.terms if t.user == k)
                                    for k in term_users])
        G = np.zeros((len(term_users), nt))
        for j, t in enumerate(model.terms):
            G[term_users.index(t.user), j] = 1.0
        expr_rows, expr_term = [], []
        for j, t in enumerate(model.terms):
            for expr in t.expressions:
                row = np.zeros(nl)
                row[list(expr)] = 1.0
                expr_rows.append(row)
                expr_term.append(j)
        A = np.array(expr_rows).reshape(len(expr_rows), nl)
        T = np.zeros((len(expr_rows), nt))
        T[np.arange(len(expr_rows)), expr_term] = 1.0

        # every user dropped (zero budgets) leaves no power variables
        self.p = cp.Variable(ns, nonneg=True, name="p") if ns else None
        self.Lam = cp.Variable(nt, name="Lambda")
        self.slack = cp.Variable(len(term_users), nonneg=True, name="qos_slack")
        self.threshold = cp.Parameter(len(term_users), nonneg=True, name="threshold")
        self.slack_cap = cp.Parameter(nonneg=True, name="slack_cap", value=0.0)
        self.penalty = cp.Parameter(nonneg=True, name="penalty", value=0.0)

        cons = []
        if nl:
            self.C = cp.Parameter((nl, ns), nonneg=True, name="C")
            self.a = cp.Parameter(nl, nonneg=True, name="agm_x")
            self.b = cp.Parameter(nl, nonneg=True, name="agm_y")
            self.w = cp.Parameter(nl, nonneg=True, name="weight")
            self.x = cp.Variable(nl, nonneg=True, name="x")
            self.y = cp.Variable(nl, nonneg=True, name="y")
            cons.append(self.y >= self.C @ self.p + 1.0)
            cons.append(cp.square(cp.multiply(self.a, self.x))
                        + cp.square(cp.multiply(self.b, self.y))
                        <= self.p[model.stream_of_link])
            if log_mode == "exp":
                bits = cp.log1p(self.x) / LN2
            else:
                self.slope = cp.Parameter((nl, PWL_SEGMENTS), nonneg=True, name="slope")
                self.intercept = cp.Parameter((nl, PWL_SEGMENTS), name="intercept")
                self.x_max = cp.Parameter(nl, nonneg=True, name="x_max")
                bits = cp.Variable(nl, name="t")
                for i in range(PWL_SEGMENTS):
                    cons.append(bits <= cp.multiply(self.slope[:, i], self.x) + self.intercept[:, i])
                cons.append(self.x <= self.x_max)
            cons.append(A @ cp.multiply(self.w, bits) >= T @ self.Lam)
        else:
            self.x = self.y = None
            cons.append(np.zeros(len(expr_rows)) >= T @ self.Lam)
        if ns:
            cons.append(B @ self.p <= 1.0)
        cons.append(G @ self.Lam + self.slack >= self.threshold)
        cons.append(self.slack <= self.slack_cap)
        self.constraints = cons
        objective = cp.sum(self.Lam) - self.penalty * cp.sum(self.slack)
        self.problem = cp.Problem(cp.Maximize(objective), cons)
        self.model = model
        self.census = _census(model)
        self._scale = np.ones(ns)
        self._snr = np.ones(nl)

    def set_elastic(self, on: bool, penalty: float = 100.0, cap: float = 1e3) -> None:
        self.slack_cap.value = cap if on else 0.0
        self.penalty.value = penalty if on else 0.0

    def load(self, model: LinkModel, config: SystemConfig, delta: float, surr: SurrogateState | None):
        """Set every parameter for one instance / slot split / AGM state.

        ``surr.phi`` holds the AGM scales in physical units (``sqrt(y / x)``
        with ``y`` in watts).
        """
        self.model = model
        ccus = set(model.ccus)
        self._scale = np.array([config.pu_max_w if int(k) in ccus else config.pv_max_w
                                for k in model.owners])
        self.threshold.value = np.where(self.row_is_ccu, config.r_th_u, config.r_th_v)
        if not self.n_links:
            return
        scale, noise = self._scale, model.noise
        self.C.value = model.C * scale[None, :] / noise[:, None]
        self._snr = model.sig * scale[model.stream_of_link] / noise
        self.w.value = model.weights(delta)
        phi = surr.phi if surr is not None else np.sqrt(noise)
        self.set_phi(phi)
        if self.log_mode == "pwl":
            x_max = np.maximum(self._snr, 1e-6)
            slope, intercept = pwl_log2_segments(x_max)
            self.slope.value, self.intercept.value, self.x_max.value = slope, intercept, x_max

    def set_phi(self, phi: np.ndarray) -> None:
        # physical phi -> normalised: y_norm = y / noise
        phi_n = np.asarray(phi) / np.sqrt(self.model.noise)
        root = np.sqrt(2.0 * self._snr)
        self.a.value = phi_n / root
        self.b.value = 1.0 / (phi_n * root)

    def solve(self, solver: str = "CLARABEL") -> str:
        try:
            with warnings.catch_warnings():
                # inaccurate solutions are reported through the status instead
                warnings.simplefilter("ignore", UserWarning)
                self.problem.solve(solver=solver, warm_start=False)
        except cp.SolverError as exc:
            log.debug("solver error: %s", exc)
            return "numerical-failure"
        status = self.problem.status
        if status in OK_STATUSES:
            return "optimal"
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return "infeasible"
        return "numerical-failure"

    def values(self):
        """Solution in physical units: powers (W), SINRs, slacks (W), Lambda."""
        if self.n_links:
            x = np.maximum(self.x.value, 0.0)
            y = np.maximum(self.y.value, 0.0) * self.model.noise
        else:
            x = y = np.zeros(0)
        P = np.maximum(self.p.value, 0.0) * self._scale if self.n_streams else np.zeros(0)
        return P, x, y, np.array(self.Lam.value)

    def slack_total(self) -> float:
        return float(np.sum(self.slack.value))

    def assign(self, P: np.ndarray, x: np.ndarray, y: np.ndarray, Lam: np.ndarray) -> None:
        """Put a physical-unit point into the variables (for residual checks)."""
        if self.n_streams:
            self.p.value = np.asarray(P) / self._scale
        if self.n_links:
            self.x.value = np.asarray(x, dtype=float)
            self.y.value = np.asarray(y) / self.model.noise
        self.Lam.value = np.asarray(Lam, dtype=float)
        self.slack.value = np.zeros(len(self.row_is_ccu))

    def residuals(self) -> list[float]:
        """Largest violation of each constraint at the assigned point."""
        return [float(np.max(np.atleast_1d(c.violation()))) for c in self.constraints]


def _census(model: LinkModel) -> dict[str, int]:
    out = {"Lambda_u": 0, "Lambda_v": 0, "P": len(model.streams)}
    for t in model.terms:
        out["Lambda_u" if t.is_ccu else "Lambda_v"] += 1
    for link in model.links:
        xa, ya = ROLE_AUX[link.role]
        out[xa] = out.get(xa, 0) + 1
        out[ya] = out.get(ya, 0) + 1
    return out


_PROGRAMS: dict[tuple, ConicProgram] = {}


def _dropped(plan: StreamPlan, config: SystemConfig) -> tuple[int, ...]:
    drop = []
    if config.pu_max_w <= 0:
        drop += plan.pairing.ccus
    if config.pv_max_w <= 0:
        drop += plan.pairing.ceus
    return tuple(sorted(drop))


def _program_for(model: LinkModel, plan: StreamPlan, config: SystemConfig, drop) -> ConicProgram:
    key = (plan.shape_key, bool(drop) and (config.pu_max_w <= 0, config.pv_max_w <= 0), config.log_mode)
    prog = _PROGRAMS.get(key)
    if prog is None:
        prog = ConicProgram(model, config.log_mode)
        _PROGRAMS[key] = prog
    return prog


def _as_plan(plan) -> StreamPlan:
    return StreamPlan.crsma(plan) if isinstance(plan, PairingPolicy) else plan


def _prepare(plan, coeffs, config, order):
    plan = _as_plan(plan)
    drop = _dropped(plan, config)
    model = build_link_model(plan, coeffs, order, "static-ipi", drop)
    return plan, model, _program_for(model, plan, config, drop)


def build_socp(plan: StreamPlan | PairingPolicy, coeffs: MrcCoefficients, config: SystemConfig,
               delta: float, surr: SurrogateState | None = None,
               order: DecodingOrder | None = None) -> ConicProgram:
    """Surrogate program for slot split ``delta``, loaded and ready to solve.

    Without ``surr`` the AGM scales are taken at the default initial point.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    plan, model, prog = _prepare(plan, coeffs, config, order)
    if surr is None:
        surr = initial_state(model, initial_powers(model, config))
    prog.set_elastic(False)
    prog.load(model, config, delta, surr)
    return prog


@dataclass
class SocpOutcome:
    """Result of one SCA run at a fixed slot split.

    ``status`` is ``optimal``, ``infeasible`` or ``numerical-failure``.
    ``init_failed`` marks runs whose first surrogate had no feasible point
    and went through restoration; ``restoration_iterations`` counts those
    extra solves, which are not part of ``iterations``.
    """

    status: str
    objective: float
    powers: PowerAllocation | None
    aux: dict = field(default_factory=dict)
    phi: np.ndarray | None = None
    iterations: int = 0
    history: list[float] = field(default_factory=list)
    delta: float | None = None
    converged: bool = False
    init_failed: bool = False
    restoration_iterations: int = 0
    model: LinkModel | None = None
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    sweep: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def initial_powers(model: LinkModel, config: SystemConfig, fraction: float = 0.25) -> np.ndarray:
    """``fraction`` of each budget, split equally over the user's streams."""
    rows = model.budget_rows()
    ccus = set(model.ccus)
    P = np.zeros(len(model.streams))
    for k, idx in rows.items():
        budget = config.pu_max_w if k in ccus else config.pv_max_w
        P[idx] = fraction * budget / len(idx)
    return P


def initial_state(model: LinkModel, P0: np.ndarray) -> SurrogateState:
    if not len(model.links):
        return SurrogateState(np.zeros(0))
    return SurrogateState.at_point(model.sinr(P0), model.C @ P0 + model.noise)


def _aux(model: LinkModel, x, y, Lam) -> dict:
    aux: dict[str, dict] = {"Lambda": {}}
    for j, t in enumerate(model.terms):
        aux["Lambda"][(t.user, t.part)] = float(Lam[j])
    for i, link in enumerate(model.links):
        xa, ya = ROLE_AUX[link.role]
        aux.setdefault(xa, {})[(link.role, link.stream)] = float(x[i])
        aux.setdefault(ya, {})[(link.role, link.stream)] = float(y[i])
    return aux


def _allocation(model: LinkModel, P: np.ndarray, delta: float) -> PowerAllocation:
    return PowerAllocation({s: float(p) for s, p in zip(model.streams, P)}, delta)


def _restore(prog: ConicProgram, model, config, delta, surr) -> tuple[SurrogateState | None, int]:
    """Elastic SCA on the QoS rows until their slack vanishes.

    Returns the AGM state at the first slack-free point, or ``None`` when
    the slack stalls above zero (the instance is treated as infeasible).
    """
    prog.set_elastic(True)
    prev = -math.inf
    it = 0
    try:
        while it < config.max_iter:
            it += 1
            prog.load(model, config, delta, surr)
            if prog.solve(config.solver) != "optimal":
                return None, it
            P, x, y, Lam = prog.values()
            surr = SurrogateState(phi_from(x, y), it)
            if prog.slack_total() < 1e-7:
                return surr, it
            obj = prog.problem.value
            if abs(obj - prev) < config.eps * 1e-2:
                return None, it
            prev = obj
        return None, it
    finally:
        prog.set_elastic(False)


def sca_solve(plan: StreamPlan | PairingPolicy, coeffs: MrcCoefficients, config: SystemConfig,
              delta: float, order: DecodingOrder | None = None,
              init_fraction: float = 0.25) -> SocpOutcome:
    """Iterate solve / AGM update until the objective moves less than ``config.eps``.

    The starting point spends ``init_fraction`` of every budget, split
    equally over each user's streams. If the first surrogate is infeasible
    an elastic restoration phase looks for a QoS-feasible point first.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    plan, model, prog = _prepare(plan, coeffs, config, order)
    prog.set_elastic(False)

    P0 = initial_powers(model, config, init_fraction)
    surr0 = initial_state(model, P0)
    prev = evaluate(model, P0, delta).sum_rate
    surr = surr0
    history: list[float] = []
    last = None
    status = "optimal"
    converged = init_failed = False
    restoration = 0
    it = 0
    while it < config.max_iter:
        prog.load(model, config, delta, surr)
        status = prog.solve(config.solver)
        if status != "optimal" and last is None and not init_failed:
            init_failed = True
            surr, restoration = _restore(prog, model, config, delta, surr0)
            if surr is None:
                return SocpOutcome(status="infeasible", objective=-math.inf, powers=None,
                                   iterations=0, delta=delta, init_failed=True,
                                   restoration_iterations=restoration, model=model)
            surr0 = surr
            continue
        it += 1
        if status != "optimal":
            if last is None:
                break
            log.debug("surrogate failed after update (%s); resetting phi", status)
            prog.load(model, config, delta, surr0)
            status = prog.solve(config.solver)
            if status != "optimal":
                status = "numerical-failure"
                break
        P, x, y, Lam = prog.values()
        obj = float(np.sum(Lam))
        history.append(obj)
        last = (P, x, y, Lam, surr.phi.copy())
        surr = SurrogateState(phi_from(x, y), it)
        if not len(model.links) or abs(obj - prev) < config.eps:
            converged = True
            break
        prev = obj

    if last is None:
        return SocpOutcome(status=status if status != "optimal" else "numerical-failure",
                           objective=-math.inf, powers=None, iterations=it, delta=delta,
                           init_failed=init_failed, restoration_iterations=restoration, model=model)
    P, x, y, Lam, used_phi = last
    return SocpOutcome(
        status=status,
        objective=float(np.sum(Lam)),
        powers=_allocation(model, P, delta),
        aux=_aux(model, x, y, Lam),
        phi=used_phi,
        iterations=it,
        history=history,
        delta=delta,
        converged=converged,
        init_failed=init_failed,
        restoration_iterations=restoration,
        model=model,
        x=x,
        y=y,
    )


def delta_search(plan: StreamPlan | PairingPolicy, coeffs: MrcCoefficients, config: SystemConfig,
                 order: DecodingOrder | None = None,
                 grid=None) -> tuple[float | None, SocpOutcome]:
    """Run the SCA at every grid point and keep the best objective.

    Grid points that fail score ``-inf``; ties go to the smaller ``delta``.
    ``delta = 1`` leaves no CT phase and is scored without a solve. If every
    point fails the returned delta is ``None`` and the outcome is infeasible.
    """
    grid = sorted(config.delta_grid if grid is None else grid)
    best_delta, best = None, None
    sweep = {}
    for d in grid:
        out = _solve_at(plan, coeffs, config, d, order)
        sweep[d] = out.objective if out.ok else -math.inf
        if out.ok and (best is None or out.objective > best.objective):
            best_delta, best = d, out
    if best is None:
        best = SocpOutcome(status="infeasible", objective=-math.inf, powers=None)
    best.sweep = sweep
    return best_delta, best


def _solve_at(plan, coeffs, config, delta, order) -> SocpOutcome:
    if delta >= 1.0:
        return _full_dt_outcome(plan, coeffs, config, order)
    return sca_solve(plan, coeffs, config, delta, order)


def _full_dt_outcome(plan, coeffs, config, order) -> SocpOutcome:
    """``delta = 1``: CT rates vanish, so any positive CCU threshold is unmet.
    With a zero CCU threshold the point degenerates to the CEU-only problem,
    which is solved at a slot split just below one."""
    if config.r_th_u > 0:
        return SocpOutcome(status="infeasible", objective=-math.inf, powers=None, delta=1.0)
    out = sca_solve(plan, coeffs, config, 1.0 - 1e-9, order)
    out.delta = 1.0
    return out
