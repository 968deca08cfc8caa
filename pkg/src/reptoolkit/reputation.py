"""Classification of commitment strategies and the resulting payoff bounds.

The central question is whether a commitment strategy is
*confound-defeating*: against every short-run response that some
observationally equivalent strategy could rationalize, the strategy's
signal-action coupling must be the unique optimal transport plan between
its marginals.  Under supermodular payoffs this reduces to monotonicity of
the strategy in a pair of orders.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from reptoolkit.errors import GameError, ScopeLimitError
from reptoolkit.responses import (
    confirmed_pairs,
    grid_points,
    in_B,
    payoff_ledger,
    PayoffLedger,
    ResponsePair,
    upper_commitment_payoff,
    lower_commitment_payoff,
)
from reptoolkit.stage_game import (
    MixedAction,
    StageGame,
    Strategy,
    payoff_tables,
    pure_strategies,
    require_valid,
    signal_table,
)
from reptoolkit.tolerances import get_tolerances
from reptoolkit.transport import ExchangeCycle, Uniqueness, classify_gain, min_cycle_gain, supports_up_to

ORDER_SEARCH_LIMIT = 40320
SEPARABILITY_LIMIT = 12
GRID_CELL_LIMIT = 8
GRID_STRATEGY_LIMIT = 3000
MIX_GRID = 8


@dataclass(frozen=True)
class OrderPair:
    """Total orders on signals and actions, each listed from highest to lowest."""

    order_y: tuple[str, ...]
    order_a: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "order_y", tuple(map(str, self.order_y)))
        object.__setattr__(self, "order_a", tuple(map(str, self.order_a)))
        for name, o in (("order_y", self.order_y), ("order_a", self.order_a)):
            if len(set(o)) != len(o):
                raise GameError(f"{name} repeats labels: {o}")

    def ranks(self, y_labels: Sequence[str], a_labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Rank arrays aligned with the given label lists; larger rank means higher."""
        if sorted(self.order_y) != sorted(y_labels) or sorted(self.order_a) != sorted(a_labels):
            raise GameError("orders are not permutations of the given labels")
        ry = np.array([len(self.order_y) - 1 - self.order_y.index(y) for y in y_labels])
        ra = np.array([len(self.order_a) - 1 - self.order_a.index(a) for a in a_labels])
        return ry, ra

    def as_dict(self) -> dict:
        return {"order_y": list(self.order_y), "order_a": list(self.order_a)}


@dataclass(frozen=True)
class TypeSpace:
    """Commitment types with a prior over ``[rational] + types``."""

    types: tuple[Strategy, ...]
    prior: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        types = tuple(self.types)
        if not types:
            raise GameError("type space needs at least one commitment type")
        prior = np.array(self.prior, dtype=float)
        if prior.shape != (len(types) + 1,):
            raise GameError(f"prior must have {len(types) + 1} entries (rational first)")
        if np.any(prior[1:] <= 0) or prior[0] < 0:
            raise GameError("prior must put positive weight on every commitment type")
        if abs(prior.sum() - 1) > 1e-9:
            raise GameError(f"prior sums to {prior.sum()!r}")
        names = tuple(self.names) or tuple(t.label() for t in types)
        if len(names) != len(types) or len(set(names)) != len(names):
            raise GameError("type names must be unique, one per type")
        prior.setflags(write=False)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "names", names)

    @classmethod
    def single(cls, s1: Strategy, weight: float = 0.5, name: str = "") -> "TypeSpace":
        return cls((s1,), [1 - weight, weight], (name or s1.label(),))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise GameError(f"unknown type {name!r}; known: {self.names}") from None


# supermodularity and monotonicity


def supermodular_margin(game: StageGame, orders: OrderPair) -> float:
    """Smallest cross difference of u1 over y > y', a > a' and all pure a2."""
    ry, ra = orders.ranks(game.Y0, game.A1)
    margin = np.inf
    ys = np.argsort(-ry)
    as_ = np.argsort(-ra)
    for hi_y, lo_y in itertools.combinations(ys, 2):
        for hi_a, lo_a in itertools.combinations(as_, 2):
            d = (game.u1[hi_y, hi_a] - game.u1[hi_y, lo_a]) - (game.u1[lo_y, hi_a] - game.u1[lo_y, lo_a])
            margin = min(margin, float(d.min()))
    return margin


def is_supermodular(game: StageGame, orders: OrderPair) -> bool:
    """Strict supermodularity of u1 in (y0, a1) for every pure a2.

    Games with a single signal or a single action satisfy it vacuously.
    """
    return supermodular_margin(game, orders) > get_tolerances().tie


def find_supermodular_orders(game: StageGame, limit: int = ORDER_SEARCH_LIMIT) -> OrderPair | None:
    """First order pair (signal permutations outer, action permutations inner) that works."""
    count = math.factorial(len(game.Y0)) * math.factorial(len(game.A1))
    if count > limit:
        raise ScopeLimitError(f"{count} order pairs exceed the search limit {limit}")
    for oy in itertools.permutations(game.Y0):
        for oa in itertools.permutations(game.A1):
            orders = OrderPair(oy, oa)
            if is_supermodular(game, orders):
                return orders
    return None


def is_monotone(s1: Strategy, orders: OrderPair):
    """Whether every selection from the support of ``s1`` is increasing.

    Returns ``(True, None)`` or ``(False, (y, a, y_low, a_low))`` with
    ``y`` above ``y_low``, ``a`` played after ``y``, ``a_low`` played after
    ``y_low`` and ``a_low`` strictly above ``a``.
    """
    tol = get_tolerances().support
    ry, ra = orders.ranks(s1.y_labels, s1.a_labels)
    y_seq = [s1.y_labels.index(y) for y in orders.order_y]
    a_seq = [s1.a_labels.index(a) for a in orders.order_a]
    for p, hi in enumerate(y_seq):
        for lo in y_seq[p + 1:]:
            for a in a_seq:
                if s1.rows[hi, a] <= tol:
                    continue
                for b in a_seq:
                    if s1.rows[lo, b] > tol and ra[b] > ra[a]:
                        return False, (s1.y_labels[hi], s1.a_labels[a], s1.y_labels[lo], s1.a_labels[b])
    return True, None


def cyclical_separability(game: StageGame, strict: bool, limit: int = SEPARABILITY_LIMIT) -> bool:
    """Whether the (strict) CM status of every full-row support is the same for all pure a2."""
    ny, na = len(game.Y0), len(game.A1)
    if ny * na > limit:
        raise ScopeLimitError(f"|Y0|*|A1| = {ny * na} exceeds the separability limit {limit}")
    if len(game.A2) == 1:
        return True
    eps = get_tolerances().cm
    for S in supports_up_to(ny, na):
        status = set()
        for k in range(len(game.A2)):
            gain, _ = min_cycle_gain(S, game.u1[:, :, k])
            status.add(gain > eps if strict else gain >= -eps)
        if len(status) > 1:
            return False
    return True


# confound-defeating


@dataclass(frozen=True)
class ConfoundResult:
    verdict: Uniqueness
    mode: str
    checked_a2: tuple[str, ...]
    per_a2: dict
    cycle: ExchangeCycle | None = None
    offending_a2: str | None = None

    @property
    def is_true(self) -> bool:
        return self.verdict is Uniqueness.UNIQUE

    def as_dict(self) -> dict:
        return {
            "verdict": {"unique": True, "non_unique": False, "marginal": "marginal"}[self.verdict.value],
            "mode": self.mode,
            "checked_a2": list(self.checked_a2),
            "per_a2": dict(self.per_a2),
            "certificate": None if self.cycle is None else {
                "a2": self.offending_a2, **self.cycle.as_dict()},
        }


def strict_cm_by_a2(game: StageGame, s1: Strategy) -> dict:
    """Tri-state strict-CM status of supp(s1) under u1(., a2) for each pure a2."""
    S = s1.support()
    out = {}
    for k, lab, cost in game.pure_a2_slices():
        gain, cyc = min_cycle_gain(S, cost, game.Y0, game.A1)
        out[lab] = (classify_gain(gain), gain, cyc)
    return out


def is_confound_defeating(game: StageGame, s1_star: Strategy, mode: str = "exact-pure") -> ConfoundResult:
    """Decide confound-defeatingness of ``s1_star``.

    ``exact-pure`` checks the player-2 actions that appear in pure
    0-confirmed best responses; ``conservative`` checks every player-2
    action.  The verdict is unique (true), non_unique (false, with an
    exchange cycle) or marginal when the decisive cycle gain is within the
    CM tolerance of zero.
    """
    if mode == "exact-pure":
        ks = sorted({p.alpha2.support()[0] for p, _ in confirmed_pairs(game, s1_star, 0.0)})
    elif mode == "conservative":
        ks = list(range(len(game.A2)))
    else:
        raise GameError(f"unknown mode {mode!r}; use exact-pure or conservative")
    S = s1_star.support()
    per, worst = {}, None
    for k in ks:
        gain, cyc = min_cycle_gain(S, game.u1[:, :, k], game.Y0, game.A1)
        v = classify_gain(gain)
        per[game.A2[k]] = v.value
        if worst is None or gain < worst[0]:
            worst = (gain, cyc, game.A2[k])
    verdict = classify_gain(worst[0])
    if verdict is Uniqueness.UNIQUE:
        return ConfoundResult(verdict, mode, tuple(game.A2[k] for k in ks), per)
    return ConfoundResult(verdict, mode, tuple(game.A2[k] for k in ks), per, worst[1], worst[2])


# behavioral confounding and salience


def _b1_pairs(game: StageGame, s1_star) -> list[tuple[int, int]]:
    return [(p.alpha0.support()[0], p.alpha2.support()[0]) for p, _ in confirmed_pairs(game, s1_star, 1.0)]


def signal_gaps(game: StageGame, types: TypeSpace, s1_star: int):
    """``gaps[t, q]``: sup-norm signal gap between type t and s1* at the q-th B_1 pair."""
    star = types.types[s1_star]
    pairs = _b1_pairs(game, star)
    P_star = signal_table(game, star)
    gaps = np.zeros((len(types.types), len(pairs)))
    for t, s in enumerate(types.types):
        P = signal_table(game, s)
        for q, (a0, a2) in enumerate(pairs):
            gaps[t, q] = np.max(np.abs(P[a0, a2] - P_star[a0, a2]))
    return gaps, pairs


def is_behaviorally_confounded(game: StageGame, types: TypeSpace, s1_star: int):
    """Whether another type produces the same public signals at some pair in B_1.

    Returns ``(bool, witness)`` with witness ``(type name, "a0/a2")``.
    """
    eps = get_tolerances().conf
    gaps, pairs = signal_gaps(game, types, s1_star)
    for t in range(len(types.types)):
        if t == s1_star:
            continue
        for q, (a0, a2) in enumerate(pairs):
            if gaps[t, q] <= eps:
                return True, (types.names[t], f"{game.A0[a0]}/{game.A2[a2]}")
    return False, None


def omega_eta(game: StageGame, types: TypeSpace, s1_star: int, eta: float) -> list[int]:
    """Indices of types whose signals come within ``eta`` of s1*'s at some B_1 pair."""
    gaps, _ = signal_gaps(game, types, s1_star)
    if gaps.shape[1] == 0:
        return []
    return [t for t in range(len(types.types)) if gaps[t].min() < eta]


def omega0(game: StageGame, types: TypeSpace, s1_star: int) -> list[int]:
    """Types whose signals equal s1*'s (within ``eps_conf``) at some B_1 pair."""
    eps = get_tolerances().conf
    gaps, _ = signal_gaps(game, types, s1_star)
    if gaps.shape[1] == 0:
        return []
    return [t for t in range(len(types.types)) if gaps[t].min() <= eps]


@dataclass(frozen=True)
class C0Result:
    value: float
    attained_by: str | None
    grid_value: float | None = None
    grid_changed: bool = False


def _c0_lp(U0s, U2s, star: int, alpha0: np.ndarray, a2: int) -> float | None:
    """max nu[star] s.t. (alpha0, a2) best responds to sum_t nu_t s_t."""
    n = U0s.shape[0]
    A_ub, b_ub = [], []
    for a in np.flatnonzero(alpha0 > 0):
        for alt in range(U0s.shape[1]):
            if alt != a:
                A_ub.append(U0s[:, alt] - U0s[:, a])
                b_ub.append(0.0)
    u2 = np.einsum("a,tak->tk", alpha0, U2s)
    for k in range(U2s.shape[2]):
        if k != a2:
            A_ub.append(u2[:, k] - u2[:, a2])
            b_ub.append(0.0)
    c = np.zeros(n)
    c[star] = -1.0
    res = linprog(c, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                  A_eq=np.ones((1, n)), b_eq=[1.0], bounds=(0, None), method="highs")
    if res.status == 2:
        return None
    if res.status != 0:  # pragma: no cover
        raise RuntimeError(res.message)
    return float(-res.fun)


def confounding_weight_c0(game: StageGame, types: TypeSpace, s1_star: int, grid: bool = False) -> C0Result:
    """Largest weight on s1* in a type mixture that rationalizes a response outside B(s1*).

    The mixture ranges over all commitment types.  Returns ``-inf`` when no
    pure pair outside B(s1*) best responds to any mixture.  With ``grid``,
    player-0 mixtures on the 1/32 simplex grid are tried as well; mixing over
    player-2 actions adds nothing since best-response sets are supports.
    """
    star = types.types[s1_star]
    tabs = [payoff_tables(game, s) for s in types.types]
    U0s = np.array([t[0] for t in tabs])
    U2s = np.array([t[2] for t in tabs])
    n0, n2 = len(game.A0), len(game.A2)
    best, who = -np.inf, None
    for a0 in range(n0):
        for a2 in range(n2):
            if in_B(game, star, ResponsePair.pure(game, a0, a2)):
                continue
            alpha0 = np.zeros(n0)
            alpha0[a0] = 1.0
            val = _c0_lp(U0s, U2s, s1_star, alpha0, a2)
            if val is not None and val > best:
                best, who = val, f"{game.A0[a0]}/{game.A2[a2]}"
    grid_value, changed = None, False
    if grid and n0 > 1:
        grid_value = best
        for alpha0 in grid_points(n0):
            if np.count_nonzero(alpha0) < 2:
                continue
            for a2 in range(n2):
                pair = ResponsePair(MixedAction("A0", alpha0), MixedAction.pure_index(n2, "A2", a2))
                if in_B(game, star, pair):
                    continue
                val = _c0_lp(U0s, U2s, s1_star, alpha0, a2)
                if val is not None and val > grid_value:
                    grid_value = val
        changed = grid_value > best + 1e-6
        if changed:
            best, who = grid_value, "grid"
    return C0Result(float(best), who, None if grid_value is None else float(grid_value), bool(changed))


def salience_from(c0: float, weight: float) -> float:
    """beta from c0 and the conditional prior weight of s1* among signal-equivalent types."""
    if c0 == -np.inf:
        return 1.0
    if c0 >= 1 - 1e-15:
        return 0.0
    return max((weight - c0) / (1 - c0), 0.0)


def conditional_weight(game: StageGame, types: TypeSpace, s1_star: int) -> float:
    members = omega0(game, types, s1_star)
    if s1_star not in members:  # pragma: no cover - s1* is always at distance zero from itself
        members.append(s1_star)
    w = types.prior[1:][members]
    return float(types.prior[1 + s1_star] / w.sum())


def salience(game: StageGame, types: TypeSpace, s1_star: int, grid: bool = False) -> float:
    c0 = confounding_weight_c0(game, types, s1_star, grid).value
    return salience_from(c0, conditional_weight(game, types, s1_star))


# enumeration for the upper bounds


def _row_grid(na: int, step: int = MIX_GRID) -> list[np.ndarray]:
    return [np.array(p) for p in grid_points(na, step)]


def enumerate_strategies(game: StageGame, extra: Sequence[Strategy] = ()):
    """Pure strategies, plus rows on the 1/8 grid for small games, plus ``extra``.

    Returns ``(strategies, scope)`` where scope describes what was covered.
    """
    ny, na = len(game.Y0), len(game.A1)
    extra = list(extra)
    tail = f" + {len(extra)} given" if extra else ""
    pure = list(pure_strategies(game))
    if ny * na <= GRID_CELL_LIMIT:
        rows = _row_grid(na)
        count = len(rows) ** ny
        if count <= GRID_STRATEGY_LIMIT:
            strategies = [Strategy(np.array(choice), game.Y0, game.A1)
                          for choice in itertools.product(rows, repeat=ny)]
            return strategies + extra, f"pure and 1/{MIX_GRID}-grid mixed rows ({count} strategies){tail}"
        return pure + extra, f"pure only ({len(pure)} strategies; grid of {count} exceeds {GRID_STRATEGY_LIMIT}){tail}"
    return pure + extra, f"pure only ({len(pure)} strategies; |Y0|*|A1| > {GRID_CELL_LIMIT}){tail}"


def _weak_cm_all(game: StageGame, S, cache: dict) -> bool:
    key = tuple(S)
    if key not in cache:
        eps = get_tolerances().cm
        cache[key] = all(min_cycle_gain(S, game.u1[:, :, k])[0] >= -eps for k in range(len(game.A2)))
    return cache[key]


def converse_cm_bound(game: StageGame, extra: Sequence[Strategy] = ()):
    """Greatest upper commitment payoff over enumerated u1-cyclically monotone strategies."""
    strategies, scope = enumerate_strategies(game, extra)
    cache: dict = {}
    best = -np.inf
    for s in strategies:
        if _weak_cm_all(game, s.support(), cache):
            best = max(best, upper_commitment_payoff(game, s))
    return best, scope


def monotone_upper_bound(game: StageGame, orders: OrderPair, extra: Sequence[Strategy] = ()):
    strategies, scope = enumerate_strategies(game, extra)
    best = -np.inf
    for s in strategies:
        if is_monotone(s, orders)[0]:
            best = max(best, upper_commitment_payoff(game, s))
    return best, scope


def monotone_lower_bound(game: StageGame, types: TypeSpace, orders: OrderPair) -> float | None:
    """Best lower commitment payoff over monotone types that are not behaviorally confounded."""
    vals = []
    for t, s in enumerate(types.types):
        if is_monotone(s, orders)[0] and not is_behaviorally_confounded(game, types, t)[0]:
            vals.append(lower_commitment_payoff(game, s))
    return max(vals) if vals else None


# pipeline


@dataclass(frozen=True)
class ReputationVerdict:
    s1_star: str
    supermodular: OrderPair | None
    monotone: dict
    strictly_cm: dict
    cyclically_separable: bool | None
    strictly_cyclically_separable: bool | None
    confound: ConfoundResult
    behaviorally_confounded: bool
    confounding_witness: tuple | None
    omega0: tuple[str, ...]
    c0: C0Result
    conditional_weight: float
    salience_beta: float
    bounds: dict
    ledger: PayoffLedger
    scopes: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "s1_star": self.s1_star,
            "supermodular": None if self.supermodular is None else self.supermodular.as_dict(),
            "monotone": dict(self.monotone),
            "strictly_cm": dict(self.strictly_cm),
            "cyclically_separable": self.cyclically_separable,
            "strictly_cyclically_separable": self.strictly_cyclically_separable,
            "confound_defeating": self.confound.as_dict(),
            "behaviorally_confounded": self.behaviorally_confounded,
            "confounding_witness": None if self.confounding_witness is None else list(self.confounding_witness),
            "omega0": list(self.omega0),
            "c0": self.c0.value,
            "c0_attained_by": self.c0.attained_by,
            "c0_grid": self.c0.grid_value,
            "c0_grid_changed": self.c0.grid_changed,
            "conditional_weight": self.conditional_weight,
            "salience_beta": self.salience_beta,
            "payoffs": self.ledger.as_dict(),
        }


def payoff_bounds(game: StageGame, types: TypeSpace, s1_star: int, mode: str = "exact-pure",
                  grid: bool = False) -> dict:
    """Bounds sub-record; see :func:`analyze` for the full verdict."""
    return analyze(game, types, s1_star, mode, grid).bounds


def analyze(game: StageGame, types: TypeSpace, s1_star: int, mode: str = "exact-pure",
            grid: bool = False) -> ReputationVerdict:
    """Run the full classification pipeline for commitment type ``s1_star``."""
    require_valid(game)
    for s in types.types:
        s.check_game(game)
    star = types.types[s1_star]
    scopes: dict = {}
    try:
        orders = find_supermodular_orders(game)
        scopes["order_search"] = "exhaustive"
    except ScopeLimitError as exc:
        orders = None
        scopes["order_search"] = f"skipped: {exc}"
    monotone = {}
    if orders is not None:
        for name, s in zip(types.names, types.types):
            monotone[name] = is_monotone(s, orders)[0]
    strict = {lab: v.value for lab, (v, _, _) in strict_cm_by_a2(game, star).items()}
    try:
        sep = cyclical_separability(game, strict=False)
        ssep = cyclical_separability(game, strict=True)
        scopes["separability"] = "exhaustive over full-row supports"
    except ScopeLimitError as exc:
        sep = ssep = None
        scopes["separability"] = f"skipped: {exc}"
    cd = is_confound_defeating(game, star, mode)
    bc, witness = is_behaviorally_confounded(game, types, s1_star)
    om0 = omega0(game, types, s1_star)
    c0 = confounding_weight_c0(game, types, s1_star, grid)
    weight = conditional_weight(game, types, s1_star)
    beta = salience_from(c0.value, weight)
    ledger = payoff_ledger(game, star, grid)
    V, V0 = ledger.V, ledger.V0
    theorem1 = V if (cd.is_true and not bc) else None
    theorem2 = beta * V + (1 - beta) * V0 if cd.is_true else None
    cm_bound, scope = converse_cm_bound(game, types.types)
    scopes["converse_cm"] = scope
    if orders is not None:
        mon_upper, scope = monotone_upper_bound(game, orders, types.types)
        scopes["v_mon_upper"] = scope
        mon_lower = monotone_lower_bound(game, types, orders)
        scopes["v_mon_lower"] = "commitment types in the type space"
    else:
        mon_upper = mon_lower = None
    bounds = {
        "fl92": V0,
        "theorem1": theorem1,
        "theorem2": theorem2,
        "converse_cm": cm_bound,
        "v_mon_lower": mon_lower,
        "v_mon_upper": mon_upper,
    }
    return ReputationVerdict(
        s1_star=types.names[s1_star],
        supermodular=orders,
        monotone=monotone,
        strictly_cm=strict,
        cyclically_separable=sep,
        strictly_cyclically_separable=ssep,
        confound=cd,
        behaviorally_confounded=bc,
        confounding_witness=witness,
        omega0=tuple(types.names[t] for t in om0),
        c0=c0,
        conditional_weight=weight,
        salience_beta=beta,
        bounds=bounds,
        ledger=ledger,
        scopes=scopes,
    )
