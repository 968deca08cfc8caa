"""Short-run best responses, confirmed best responses and commitment payoffs.

Short-run play is a pair ``(alpha0, alpha2)``.  Against a long-run
strategy ``s1`` every payoff and public-signal probability is bilinear in
the pair, so the tables from :func:`payoff_tables` and
:func:`signal_table` carry everything needed here.  Whether a pure pair is
a best response to *some* strategy with a nearby signal distribution is a
linear feasibility problem in that strategy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from reptoolkit.stage_game import (
    MixedAction,
    StageGame,
    Strategy,
    payoff_tables,
    pure_strategies,
    signal_table,
)
from reptoolkit.tolerances import get_tolerances

GRID_STEP = 32


@dataclass(frozen=True)
class ResponsePair:
    alpha0: MixedAction
    alpha2: MixedAction

    @classmethod
    def pure(cls, game: StageGame, a0: int, a2: int) -> "ResponsePair":
        return cls(MixedAction.pure_index(len(game.A0), "A0", a0),
                   MixedAction.pure_index(len(game.A2), "A2", a2))

    @property
    def is_pure(self) -> bool:
        return self.alpha0.is_pure and self.alpha2.is_pure

    def label(self, game: StageGame) -> str:
        def part(m: MixedAction, labels):
            if m.is_pure:
                return labels[m.support()[0]]
            return "{" + ",".join(f"{labels[k]}:{m.weights[k]:.6g}" for k in m.support()) + "}"

        return f"{part(self.alpha0, game.A0)}/{part(self.alpha2, game.A2)}"


@dataclass(frozen=True)
class ConfirmWitness:
    confound: Strategy
    eta_achieved: float


def _argmax_set(values: np.ndarray) -> tuple[int, ...]:
    tol = get_tolerances().tie
    return tuple(int(k) for k in np.flatnonzero(values >= values.max() - tol))


def br0_indices(game: StageGame, s1) -> tuple[int, ...]:
    U0, _, _ = payoff_tables(game, s1)
    return _argmax_set(U0)


def br2_indices(game: StageGame, alpha0, s1) -> tuple[int, ...]:
    w0 = alpha0.weights if isinstance(alpha0, MixedAction) else np.asarray(alpha0, dtype=float)
    _, _, U2 = payoff_tables(game, s1)
    return _argmax_set(w0 @ U2)


def br0(game: StageGame, s1) -> tuple[str, ...]:
    """Player 0's pure best responses to ``s1`` (labels, in label order)."""
    return tuple(game.A0[k] for k in br0_indices(game, s1))


def br2(game: StageGame, alpha0, s1) -> tuple[str, ...]:
    """Player 2's pure best responses to ``alpha0`` and ``s1``."""
    return tuple(game.A2[k] for k in br2_indices(game, alpha0, s1))


def in_B(game: StageGame, s1, pair: ResponsePair) -> bool:
    """Whether both short-run mixtures put weight only on best responses."""
    b0 = set(br0_indices(game, s1))
    if not set(pair.alpha0.support()) <= b0:
        return False
    return set(pair.alpha2.support()) <= set(br2_indices(game, pair.alpha0, s1))


# commitment payoffs


def _lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(0, None)):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 2:
        return None
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return res


def _extreme_over_B(game: StageGame, s1, sense: str):
    """Min (``sense='min'``) or max of u1 over B(s1), with an attaining pair."""
    tol = get_tolerances().tie
    U0, U1, U2 = payoff_tables(game, s1)
    B0 = list(_argmax_set(U0))
    sign = 1.0 if sense == "min" else -1.0
    best = None
    for k in range(len(game.A2)):
        if len(B0) == 1:
            a0 = B0[0]
            if U2[a0, k] < U2[a0].max() - tol:
                continue
            alpha = np.zeros(len(game.A0))
            alpha[a0] = 1.0
            val = U1[a0, k]
        else:
            others = [j for j in range(len(game.A2)) if j != k]
            A_ub = np.array([U2[B0, j] - U2[B0, k] for j in others]) if others else None
            b_ub = np.full(len(others), tol) if others else None
            res = _lp(sign * U1[B0, k], A_ub, b_ub, np.ones((1, len(B0))), [1.0])
            if res is None:
                continue
            alpha = np.zeros(len(game.A0))
            alpha[B0] = np.clip(res.x, 0, None)
            alpha /= alpha.sum()
            val = float(alpha @ U1[:, k])
        if best is None or sign * val < sign * best[0] - 1e-15:
            best = (float(val), alpha, k)
    if best is None:  # pragma: no cover - B(s1) is never empty
        raise RuntimeError("empty best-response set")
    val, alpha, k = best
    pair = ResponsePair(MixedAction("A0", alpha), MixedAction.pure_index(len(game.A2), "A2", k))
    return val, pair


def lower_commitment_payoff(game: StageGame, s1) -> float:
    """V(s1): the worst payoff for player 1 over short-run best responses to ``s1``."""
    return _extreme_over_B(game, s1, "min")[0]


def upper_commitment_payoff(game: StageGame, s1) -> float:
    """The best payoff for player 1 over short-run best responses to ``s1``."""
    return _extreme_over_B(game, s1, "max")[0]


# confirmed best responses


def _confirm_lp(game: StageGame, s_star_rows: np.ndarray, alpha0: np.ndarray, a2: int, eta: float):
    """Find s' such that (alpha0, a2) best responds to s' and signals stay within eta.

    Variables are the entries of s' (row-major over Y0 x A1) and an epigraph
    variable t for the sup-norm distance, which is minimized so the witness
    reports the smallest achievable distance.
    """
    tol = get_tolerances().tie
    ny, na = len(game.Y0), len(game.A1)
    nv = ny * na + 1
    A_ub, b_ub = [], []
    # player 0: every action in the support of alpha0 weakly beats every other action
    # U0(a, s') = sum_y rho0[y, a] sum_b s'[y, b] u0[a, b]
    coef0 = np.einsum("ya,ab->ayb", game.rho0, game.u0).reshape(len(game.A0), -1)
    for a in np.flatnonzero(alpha0 > 0):
        for a_alt in range(len(game.A0)):
            if a_alt != a:
                A_ub.append(np.append(coef0[a_alt] - coef0[a], 0.0))
                b_ub.append(tol)
    # player 2: a2 weakly beats every alternative against (alpha0, s')
    w = game.rho0 @ alpha0  # weight on each y0
    for k in range(len(game.A2)):
        if k != a2:
            diff = w[:, None] * (game.u2[:, :, k] - game.u2[:, :, a2])
            A_ub.append(np.append(diff.ravel(), 0.0))
            b_ub.append(tol)
    # signals: p'(y1) = sum_y w[y] sum_b s'[y,b] rho1[y1,b,a2]
    sig = np.einsum("y,zb->zyb", w, game.rho1[:, :, a2]).reshape(len(game.Y1), -1)
    p_star = sig @ s_star_rows.ravel()
    for z in range(len(game.Y1)):
        A_ub.append(np.append(sig[z], -1.0))
        b_ub.append(p_star[z])
        A_ub.append(np.append(-sig[z], -1.0))
        b_ub.append(-p_star[z])
    A_eq = np.zeros((ny, nv))
    for i in range(ny):
        A_eq[i, i * na:(i + 1) * na] = 1.0
    bounds = [(0, None)] * (ny * na) + [(0, max(eta, 0.0) + 1e-12)]
    c = np.zeros(nv)
    c[-1] = 1.0
    res = _lp(c, np.array(A_ub), np.array(b_ub), A_eq, np.ones(ny), bounds)
    if res is None:
        return None
    rows = np.clip(res.x[:-1].reshape(ny, na), 0, None)
    rows /= rows.sum(axis=1, keepdims=True)
    achieved = float(np.max(np.abs(sig @ rows.ravel() - p_star)))
    return rows, achieved


def _rows_of(game: StageGame, s1) -> np.ndarray:
    if isinstance(s1, Strategy):
        s1.check_game(game)
        return s1.rows
    return np.asarray(s1, dtype=float)


def confirmed_pairs(game: StageGame, s1_star, eta: float) -> list[tuple[ResponsePair, ConfirmWitness]]:
    """Pure pairs that best respond to some strategy whose signals are within ``eta``.

    Pairs come in label order (A0 outer, A2 inner).  ``eta >= 1`` makes the
    signal constraint vacuous, which yields the pure members of B_1.
    """
    rows = _rows_of(game, s1_star)
    out = []
    for a0 in range(len(game.A0)):
        alpha0 = np.zeros(len(game.A0))
        alpha0[a0] = 1.0
        for a2 in range(len(game.A2)):
            found = _confirm_lp(game, rows, alpha0, a2, eta)
            if found is None:
                continue
            conf_rows, achieved = found
            witness = ConfirmWitness(Strategy(conf_rows, game.Y0, game.A1, "confound"), achieved)
            out.append((ResponsePair.pure(game, a0, a2), witness))
    return out


def confirms(game: StageGame, s1_star, confound, pair: ResponsePair, eta: float, tol: float = 1e-7) -> bool:
    """Independent check that ``confound`` witnesses ``pair`` in B_eta(s1_star)."""
    with_tol = get_tolerances().tie + tol
    U0, _, U2 = payoff_tables(game, confound)
    a0w, a2w = pair.alpha0.weights, pair.alpha2.weights
    for a in pair.alpha0.support():
        if U0[a] < U0.max() - with_tol:
            return False
    u2 = a0w @ U2
    for k in pair.alpha2.support():
        if u2[k] < u2.max() - with_tol:
            return False
    P_conf = signal_table(game, confound)
    P_star = signal_table(game, s1_star)
    p1 = np.einsum("a,b,aby->y", a0w, a2w, P_conf)
    p0 = np.einsum("a,b,aby->y", a0w, a2w, P_star)
    return float(np.max(np.abs(p1 - p0))) <= eta + tol


def grid_points(n: int, step: int = GRID_STEP):
    """Points of the simplex in R^n with coordinates on a 1/step grid."""
    for cut in itertools.combinations(range(step + n - 1), n - 1):
        parts = np.diff((-1,) + cut + (step + n - 1,)) - 1
        yield parts / step


@dataclass(frozen=True)
class V0Result:
    value: float
    pure_value: float
    attained_by: str
    grid_value: float | None = None
    grid_changed: bool = False
    notes: tuple[str, ...] = field(default_factory=tuple)


def v0_details(game: StageGame, s1_star, grid: bool = False) -> V0Result:
    """Worst payoff over 0-confirmed best responses.

    The exact search covers pure pairs; B(s1*) is contained in B_0(s1*), so
    the value is also capped by V(s1*) (whose extremum may use a mixed
    alpha0).  With ``grid=True`` mixed alpha0 on the 1/32 simplex grid are
    also tried and the result records whether that lowered the value by
    more than 1e-6.
    """
    _, U1, _ = payoff_tables(game, s1_star)
    pairs = confirmed_pairs(game, s1_star, 0.0)
    vals = [(U1[p.alpha0.support()[0], p.alpha2.support()[0]], p.label(game)) for p, _ in pairs]
    pure_value, who = min(vals) if vals else (np.inf, "")
    V, vpair = _extreme_over_B(game, s1_star, "min")
    value = float(pure_value)
    notes = []
    if V < value - 1e-12:
        value, who = V, vpair.label(game)
        notes.append("V(s1*) below the pure confirmed minimum; capped by V(s1*)")
    grid_value = None
    changed = False
    if grid and len(game.A0) > 1:
        rows = _rows_of(game, s1_star)
        grid_value = value
        for alpha0 in grid_points(len(game.A0)):
            if np.count_nonzero(alpha0) < 2:
                continue
            for a2 in range(len(game.A2)):
                cand = float(alpha0 @ U1[:, a2])
                if cand >= grid_value - 1e-12:
                    continue
                if _confirm_lp(game, rows, alpha0, a2, 0.0) is not None:
                    grid_value = cand
        changed = grid_value < value - 1e-6
        if changed:
            notes.append("grid refinement over mixed alpha0 lowered V0 by more than 1e-6")
            value = grid_value
    return V0Result(float(value), float(pure_value), who, None if grid_value is None else float(grid_value),
                    bool(changed), tuple(notes))


def V0(game: StageGame, s1_star, grid: bool = False) -> float:
    """Lower commitment payoff when short-run players take a 0-confirmed best response."""
    return v0_details(game, s1_star, grid).value


def minmax(game: StageGame) -> float:
    """Player 1's minmax payoff against independent short-run mixtures.

    For each pure ``a0`` an epigraph LP over ``alpha2`` and per-signal
    ceilings ``t_y >= u1(y, a1, alpha2)`` is solved; the outer minimum over
    pure ``a0`` is exact because for fixed ``alpha2`` the objective is linear
    in ``alpha0``.
    """
    ny, na, n2 = len(game.Y0), len(game.A1), len(game.A2)
    best = np.inf
    for a0 in range(len(game.A0)):
        c = np.concatenate([np.zeros(n2), game.rho0[:, a0]])
        A_ub = np.zeros((ny * na, n2 + ny))
        for y in range(ny):
            for a in range(na):
                r = y * na + a
                A_ub[r, :n2] = game.u1[y, a, :]
                A_ub[r, n2 + y] = -1.0
        A_eq = np.concatenate([np.ones(n2), np.zeros(ny)])[None, :]
        bounds = [(0, None)] * n2 + [(None, None)] * ny
        res = _lp(c, A_ub, np.zeros(ny * na), A_eq, [1.0], bounds)
        best = min(best, float(res.fun))
    return best


def pure_stackelberg(game: StageGame, limit: int = 4096) -> tuple[Strategy, float]:
    """Best pure commitment by lower commitment payoff; ties go to the first in order."""
    tol = get_tolerances().tie
    best = None
    for s in pure_strategies(game, limit):
        v = lower_commitment_payoff(game, s)
        if best is None or v > best[1] + tol:
            best = (s, v)
    return best


@dataclass(frozen=True)
class PayoffLedger:
    V: float
    V0: float
    V_upper: float
    minmax: float
    stackelberg_pure: tuple[Strategy, float]
    pair_table: dict
    v0_detail: V0Result

    def as_dict(self) -> dict:
        s, v = self.stackelberg_pure
        return {
            "V": self.V,
            "V0": self.V0,
            "V_upper": self.V_upper,
            "minmax": self.minmax,
            "stackelberg_pure": {"strategy": s.as_dict(), "label": s.label(), "value": v},
            "pair_table": self.pair_table,
            "V0_attained_by": self.v0_detail.attained_by,
            "V0_pure_pairs": self.v0_detail.pure_value,
            "V0_grid": self.v0_detail.grid_value,
            "V0_grid_changed": self.v0_detail.grid_changed,
            "notes": list(self.v0_detail.notes),
        }


def payoff_ledger(game: StageGame, s1_star, grid: bool = False) -> PayoffLedger:
    _, U1, _ = payoff_tables(game, s1_star)
    table = {f"{a0}/{a2}": float(U1[i, k]) for i, a0 in enumerate(game.A0) for k, a2 in enumerate(game.A2)}
    v0 = v0_details(game, s1_star, grid)
    return PayoffLedger(
        V=lower_commitment_payoff(game, s1_star),
        V0=v0.value,
        V_upper=upper_commitment_payoff(game, s1_star),
        minmax=minmax(game),
        stackelberg_pure=pure_stackelberg(game),
        pair_table=table,
        v0_detail=v0,
    )
