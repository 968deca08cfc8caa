"""Finite stage games with a privately informed long-run player.

Timing within a period: player 0 picks ``a0``; the long-run player 1
privately observes ``y0 ~ rho0(.|a0)``; players 1 and 2 then move
simultaneously with ``a1`` and ``a2``; everyone observes the public signal
``y1 ~ rho1(.|a1, a2)``.  Player 0's payoff depends on ``(a0, a1)`` and the
payoffs of players 1 and 2 depend on ``(y0, a1, a2)``.

Array layout (all float64, read-only after construction)::

    rho0  (Y0, A0)      rho0[y0, a0] = P(y0 | a0)
    rho1  (Y1, A1, A2)  rho1[y1, a1, a2] = P(y1 | a1, a2)
    u0    (A0, A1)
    u1    (Y0, A1, A2)
    u2    (Y0, A1, A2)
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from reptoolkit.errors import GameError
from reptoolkit.tolerances import get_tolerances

AXES = ("A0", "A1", "A2", "Y0", "Y1")


def _labels(name: str, labels: Iterable) -> tuple[str, ...]:
    out = tuple(str(x) for x in labels)
    if not out:
        raise GameError(f"label list {name} is empty")
    if len(set(out)) != len(out):
        raise GameError(f"label list {name} has duplicates: {out}")
    return out


def _frozen_array(name: str, values, shape: tuple[int, ...]) -> np.ndarray:
    try:
        arr = np.array(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise GameError(f"{name} is not numeric: {exc}") from None
    if arr.shape != shape:
        raise GameError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise GameError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_simplex(name: str, arr: np.ndarray, axis: int) -> None:
    tol = get_tolerances().construction
    if np.any(arr < 0):
        raise GameError(f"{name} has negative probabilities")
    sums = arr.sum(axis=axis)
    if np.any(np.abs(sums - 1.0) > tol):
        raise GameError(f"{name} does not sum to 1 along axis {axis} (sums {sums.ravel()})")


@dataclass(frozen=True)
class StageGame:
    A0: tuple[str, ...]
    A1: tuple[str, ...]
    A2: tuple[str, ...]
    Y0: tuple[str, ...]
    Y1: tuple[str, ...]
    rho0: np.ndarray
    rho1: np.ndarray
    u0: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    name: str = ""
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        for ax in AXES:
            object.__setattr__(self, ax, _labels(ax, getattr(self, ax)))
        n0, n1, n2, ny0, ny1 = (len(getattr(self, ax)) for ax in AXES)
        object.__setattr__(self, "rho0", _frozen_array("rho0", self.rho0, (ny0, n0)))
        object.__setattr__(self, "rho1", _frozen_array("rho1", self.rho1, (ny1, n1, n2)))
        object.__setattr__(self, "u0", _frozen_array("u0", self.u0, (n0, n1)))
        object.__setattr__(self, "u1", _frozen_array("u1", self.u1, (ny0, n1, n2)))
        object.__setattr__(self, "u2", _frozen_array("u2", self.u2, (ny0, n1, n2)))
        object.__setattr__(self, "notes", tuple(self.notes))
        _check_simplex("rho0", self.rho0, 0)
        _check_simplex("rho1", self.rho1, 0)

    # label helpers
    def size(self, axis: str) -> int:
        return len(getattr(self, axis))

    def index(self, axis: str, label: str) -> int:
        labels = getattr(self, axis)
        try:
            return labels.index(str(label))
        except ValueError:
            raise GameError(f"unknown {axis} label {label!r}; known: {labels}") from None

    @property
    def u1_max(self) -> float:
        return float(self.u1.max())

    @property
    def u1_min(self) -> float:
        return float(self.u1.min())

    def pure_a2_slices(self):
        """Yield ``(k, label, u1[:, :, k])`` for each pure player-2 action."""
        for k, lab in enumerate(self.A2):
            yield k, lab, self.u1[:, :, k]


@dataclass(frozen=True)
class MixedAction:
    """Mixed action of player 0 (target ``"A0"``) or player 2 (``"A2"``)."""

    target: str
    weights: np.ndarray

    def __post_init__(self):
        if self.target not in ("A0", "A2"):
            raise GameError(f"mixed action target must be A0 or A2, got {self.target!r}")
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise GameError("mixed action weights must be a non-empty vector")
        _check_simplex(f"mixed action over {self.target}", w, 0)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def pure(cls, game: StageGame, target: str, label: str) -> "MixedAction":
        w = np.zeros(game.size(target))
        w[game.index(target, label)] = 1.0
        return cls(target, w)

    @classmethod
    def pure_index(cls, n: int, target: str, k: int) -> "MixedAction":
        w = np.zeros(n)
        w[k] = 1.0
        return cls(target, w)

    @classmethod
    def uniform(cls, n: int, target: str) -> "MixedAction":
        return cls(target, np.full(n, 1.0 / n))

    @classmethod
    def from_labels(cls, game: StageGame, target: str, probs: Mapping[str, float]) -> "MixedAction":
        w = np.zeros(game.size(target))
        for lab, p in probs.items():
            w[game.index(target, lab)] = p
        return cls(target, w)

    def support(self) -> tuple[int, ...]:
        tol = get_tolerances().support
        return tuple(int(i) for i in np.flatnonzero(self.weights > tol))

    @property
    def is_pure(self) -> bool:
        return len(self.support()) == 1


@dataclass(frozen=True)
class Strategy:
    """Map from private signals to distributions over actions.

    ``rows[i, j]`` is the probability of action ``a_labels[j]`` after signal
    ``y_labels[i]``.  Mechanisms reuse this class with states as signals and
    recommendations as actions.
    """

    rows: np.ndarray
    y_labels: tuple[str, ...]
    a_labels: tuple[str, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "y_labels", _labels("signals", self.y_labels))
        object.__setattr__(self, "a_labels", _labels("actions", self.a_labels))
        rows = _frozen_array("strategy rows", self.rows, (len(self.y_labels), len(self.a_labels)))
        _check_simplex("strategy rows", rows, 1)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def pure(cls, game: StageGame, actions: Sequence[str] | Mapping[str, str], name: str = "") -> "Strategy":
        """Pure strategy from a list (one action per signal, in Y0 order) or a map."""
        if isinstance(actions, Mapping):
            missing = set(game.Y0) - set(map(str, actions))
            if missing:
                raise GameError(f"pure strategy misses signals {sorted(missing)}")
            actions = [actions[y] for y in game.Y0]
        if len(actions) != len(game.Y0):
            raise GameError("pure strategy needs one action per signal")
        rows = np.zeros((len(game.Y0), len(game.A1)))
        for i, a in enumerate(actions):
            rows[i, game.index("A1", a)] = 1.0
        return cls(rows, game.Y0, game.A1, name or ",".join(map(str, actions)))

    @classmethod
    def from_indices(cls, game: StageGame, idx: Sequence[int], name: str = "") -> "Strategy":
        rows = np.zeros((len(game.Y0), len(game.A1)))
        rows[np.arange(len(game.Y0)), list(idx)] = 1.0
        return cls(rows, game.Y0, game.A1, name or ",".join(game.A1[k] for k in idx))

    @classmethod
    def from_rows(cls, game: StageGame, rows: Mapping[str, Mapping[str, float]] | np.ndarray,
                  name: str = "") -> "Strategy":
        if isinstance(rows, Mapping):
            mat = np.zeros((len(game.Y0), len(game.A1)))
            for y, row in rows.items():
                for a, p in row.items():
                    mat[game.index("Y0", y), game.index("A1", a)] = p
            rows = mat
        return cls(rows, game.Y0, game.A1, name)

    @classmethod
    def constant(cls, game: StageGame, row: Mapping[str, float] | Sequence[float], name: str = "") -> "Strategy":
        if isinstance(row, Mapping):
            vec = np.zeros(len(game.A1))
            for a, p in row.items():
                vec[game.index("A1", a)] = p
        else:
            vec = np.asarray(row, dtype=float)
        return cls(np.tile(vec, (len(game.Y0), 1)), game.Y0, game.A1, name)

    def check_game(self, game: StageGame) -> None:
        if self.y_labels != game.Y0 or self.a_labels != game.A1:
            raise GameError(
                f"strategy labels {self.y_labels}x{self.a_labels} do not match game {game.Y0}x{game.A1}"
            )

    def support(self) -> list[tuple[int, int]]:
        tol = get_tolerances().support
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.rows > tol))]

    def support_labels(self) -> list[tuple[str, str]]:
        return [(self.y_labels[i], self.a_labels[j]) for i, j in self.support()]

    @property
    def is_pure(self) -> bool:
        tol = get_tolerances().support
        return bool(np.all((self.rows > tol).sum(axis=1) == 1))

    def label(self) -> str:
        if self.name:
            return self.name
        if self.is_pure:
            return ",".join(self.a_labels[j] for j in self.rows.argmax(axis=1))
        return "mixed"

    def as_dict(self) -> dict:
        return {y: {a: float(self.rows[i, j]) for j, a in enumerate(self.a_labels)}
                for i, y in enumerate(self.y_labels)}


@dataclass(frozen=True)
class Coupling:
    mass: np.ndarray
    y_labels: tuple[str, ...]
    a_labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "y_labels", _labels("Y0", self.y_labels))
        object.__setattr__(self, "a_labels", _labels("A1", self.a_labels))
        m = _frozen_array("coupling", self.mass, (len(self.y_labels), len(self.a_labels)))
        if np.any(m < 0):
            raise GameError("coupling has negative mass")
        if abs(m.sum() - 1.0) > get_tolerances().construction:
            raise GameError(f"coupling mass sums to {m.sum()!r}")
        object.__setattr__(self, "mass", m)

    @property
    def row_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    @property
    def col_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    def support(self) -> list[tuple[int, int]]:
        tol = get_tolerances().support
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.mass > tol))]

    def as_dict(self) -> dict:
        return {y: {a: float(self.mass[i, j]) for j, a in enumerate(self.a_labels)}
                for i, y in enumerate(self.y_labels)}


@dataclass(frozen=True)
class ValidationReport:
    full_support_rho0: bool
    support_independent_of_a2: bool
    identified: bool
    messages: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.full_support_rho0 and self.support_independent_of_a2 and self.identified

    def as_dict(self) -> dict:
        return {
            "full_support_rho0": self.full_support_rho0,
            "support_independent_of_a2": self.support_independent_of_a2,
            "identified": self.identified,
            "ok": self.ok,
            "messages": list(self.messages),
        }


def validate_game(game: StageGame) -> ValidationReport:
    """Check full support of rho0, a2-independent supports of rho1, and identification."""
    tol = get_tolerances()
    msgs = []
    full = bool(np.all(game.rho0 > 0))
    if not full:
        for i, j in zip(*np.nonzero(game.rho0 <= 0)):
            msgs.append(f"rho0({game.Y0[i]}|{game.A0[j]}) = 0")
    same_support = True
    supp = game.rho1 > tol.support
    for j, a1 in enumerate(game.A1):
        ref = supp[:, j, 0]
        for k in range(1, len(game.A2)):
            if not np.array_equal(ref, supp[:, j, k]):
                same_support = False
                msgs.append(f"support of rho1(.|{a1},a2) differs between {game.A2[0]} and {game.A2[k]}")
    identified = True
    for k, a2 in enumerate(game.A2):
        sv = np.linalg.svd(game.rho1[:, :, k], compute_uv=False)
        rank = int(np.sum(sv > tol.rank))
        if rank < len(game.A1):
            identified = False
            msgs.append(f"rho1(.|a1,{a2}) has rank {rank} < |A1| = {len(game.A1)}")
    return ValidationReport(full, same_support, identified, tuple(msgs))


def require_valid(game: StageGame) -> None:
    """Raise ``DomainError`` unless ``game`` passes every identification check."""
    from reptoolkit.errors import DomainError

    report = validate_game(game)
    if not report.ok:
        raise DomainError("game fails identification checks: " + "; ".join(report.messages))


# distribution algebra


def _vec(x, n: int, target: str) -> np.ndarray:
    if isinstance(x, MixedAction):
        if x.target != target:
            raise GameError(f"expected a mixed action over {target}, got {x.target}")
        x = x.weights
    w = np.asarray(x, dtype=float)
    if w.shape != (n,):
        raise GameError(f"mixed action over {target} has length {w.shape}, expected {n}")
    return w


def _rows(s1, game: StageGame) -> np.ndarray:
    if isinstance(s1, Strategy):
        s1.check_game(game)
        return s1.rows
    rows = np.asarray(s1, dtype=float)
    if rows.shape != (len(game.Y0), len(game.A1)):
        raise GameError(f"strategy has shape {rows.shape}, expected {(len(game.Y0), len(game.A1))}")
    return rows


def signal_marginal(game: StageGame, alpha0) -> np.ndarray:
    """rho(alpha0): distribution of the private signal."""
    return game.rho0 @ _vec(alpha0, len(game.A0), "A0")


def induced_coupling(game: StageGame, alpha0, s1) -> Coupling:
    """Joint law of (y0, a1) when player 0 mixes ``alpha0`` and player 1 plays ``s1``."""
    gamma = signal_marginal(game, alpha0)[:, None] * _rows(s1, game)
    return Coupling(gamma, game.Y0, game.A1)


def action_marginal(game: StageGame, alpha0, s1) -> np.ndarray:
    """phi(alpha0, s1): distribution of the long-run player's action."""
    return signal_marginal(game, alpha0) @ _rows(s1, game)


def signal_distribution(game: StageGame, alpha0, s1, alpha2) -> np.ndarray:
    """Distribution of the public signal y1."""
    phi = action_marginal(game, alpha0, s1)
    a2 = _vec(alpha2, len(game.A2), "A2")
    return np.einsum("yab,a,b->y", game.rho1, phi, a2)


def expected_payoff(game: StageGame, i: int, alpha0, s1, alpha2) -> float:
    """Expected stage payoff of player ``i`` (0, 1 or 2)."""
    a0 = _vec(alpha0, len(game.A0), "A0")
    rows = _rows(s1, game)
    if i == 0:
        # u0(a0, s1) = sum_y rho0(y|a0) sum_a1 s1(y)[a1] u0(a0, a1)
        per_a0 = np.einsum("ya,yb,ab->a", game.rho0, rows, game.u0)
        return float(a0 @ per_a0)
    if i not in (1, 2):
        raise GameError(f"player index must be 0, 1 or 2, got {i}")
    u = game.u1 if i == 1 else game.u2
    gamma = (game.rho0 @ a0)[:, None] * rows
    a2 = _vec(alpha2, len(game.A2), "A2")
    return float(np.einsum("ya,yab,b->", gamma, u, a2))


def payoff_tables(game: StageGame, s1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pure-pair payoffs against ``s1``.

    Returns ``(U0, U1, U2)`` with ``U0[a0]``, ``U1[a0, a2]`` and ``U2[a0, a2]``;
    every expected payoff is bilinear in ``(alpha0, alpha2)`` over these.
    """
    rows = _rows(s1, game)
    U0 = np.einsum("ya,yb,ab->a", game.rho0, rows, game.u0)
    U1 = np.einsum("ya,yb,ybc->ac", game.rho0, rows, game.u1)
    U2 = np.einsum("ya,yb,ybc->ac", game.rho0, rows, game.u2)
    return U0, U1, U2


def signal_table(game: StageGame, s1) -> np.ndarray:
    """``P[a0, a2, y1]``: public signal distribution for each pure pair."""
    rows = _rows(s1, game)
    phi = game.rho0.T @ rows  # (A0, A1)
    return np.einsum("ab,ybc->acy", phi, game.rho1)


def pure_strategies(game: StageGame, limit: int = 4096):
    """Iterate pure strategies in lexicographic order of their action indices."""
    from reptoolkit.errors import ScopeLimitError

    count = len(game.A1) ** len(game.Y0)
    if count > limit:
        raise ScopeLimitError(f"{count} pure strategies exceed the enumeration limit {limit}")
    for idx in itertools.product(range(len(game.A1)), repeat=len(game.Y0)):
        yield Strategy.from_indices(game, idx)


# builders

CANONICAL = {
    "D1": dict(p=0.8, g=1.0, l=1.0, x=0.3, y=0.3),
    "D2": dict(p=0.8, g=1.0, l=1.0, x=0.6, y=0.6),
    "T1": dict(w=0.5, z=0.5),
}


def deterrence_threshold(g: float, l: float, y: float) -> float:
    """Lower bound on signal precision under which the deterrence analysis is usually run."""
    return max((1 + g + l) / (2 + g + l), 1 / (2 - y))


def build_deterrence(p: float, g: float, l: float, x: float, y: float, name: str = "deterrence") -> StageGame:
    """Deterrence game: player 0 cooperates or defects, player 1 acquiesces or fights.

    Player 1 sees a signal that matches player 0's action with probability
    ``p``.  Player 1 wants to acquiesce after ``c`` and fight after ``d``;
    ``x`` and ``y`` are the payoffs from the mismatched actions.
    """
    if not 0.5 < p < 1:
        raise GameError(f"signal precision p must lie in (1/2, 1), got {p}")
    if not (g > 0 and l > 0):
        raise GameError(f"g and l must be positive, got g={g}, l={l}")
    if not (0 < x < 1 and 0 < y < 1):
        raise GameError(f"x and y must lie in (0, 1), got x={x}, y={y}")
    notes = []
    thr = deterrence_threshold(g, l, y)
    if p <= thr:
        notes.append(f"warning: p={p} is at or below the precision threshold {thr:.6g}")
    return StageGame(
        A0=("C", "D"), A1=("A", "F"), A2=("-",), Y0=("c", "d"), Y1=("A", "F"),
        rho0=[[p, 1 - p], [1 - p, p]],
        rho1=np.eye(2)[:, :, None],
        u0=[[1.0, -l], [1.0 + g, 0.0]],
        u1=np.array([[1.0, x], [y, 0.0]])[:, :, None],
        u2=np.zeros((2, 2, 1)),
        name=name, notes=tuple(notes),
    )


def build_trust(w: float, z: float, name: str = "trust") -> StageGame:
    """Product-choice game with a privately observed quality state.

    The firm (player 1) sees whether the state is good or bad and chooses
    high or low effort; the customer (player 2) trusts or not.  ``w`` and
    ``z`` are the extra costs of high effort in the bad state.
    """
    if not (w > -1 and z > -1):
        raise GameError(f"w and z must exceed -1, got w={w}, z={z}")
    if min(w, z) > 0:
        notes = ("supermodular case",)
    elif max(w, z) < 0:
        notes = ("submodular case",)
    else:
        notes = ("mixed case",)
    u1 = np.array([
        [[1.0, -1.0], [2.0, 0.0]],  # G: rows H, L; cols T, N
        [[1.0 - w, -1.0 - z], [2.0, 0.0]],  # B
    ])
    u2 = np.array([
        [[2.0, 0.0], [-1.0, 0.0]],
        [[-1.0, 0.0], [-1.0, 0.0]],
    ])
    return StageGame(
        A0=("nature",), A1=("H", "L"), A2=("T", "N"), Y0=("G", "B"), Y1=("H", "L"),
        rho0=[[0.5], [0.5]],
        rho1=np.repeat(np.eye(2)[:, :, None], 2, axis=2),
        u0=np.zeros((1, 2)), u1=u1, u2=u2,
        name=name, notes=notes,
    )


def _state_dist(state_dist: Mapping[str, float] | Sequence[float], states=None):
    if isinstance(state_dist, Mapping):
        states = tuple(map(str, state_dist))
        probs = np.array([float(state_dist[s]) for s in state_dist])
    else:
        probs = np.asarray(state_dist, dtype=float)
        states = tuple(states) if states is not None else tuple(f"s{i}" for i in range(len(probs)))
    if len(states) != len(probs):
        raise GameError("state distribution and state labels differ in length")
    _check_simplex("state distribution", probs, 0)
    return states, probs


def build_delegation(eps: float, u1_table: Mapping[str, Mapping[str, float]],
                     u2_table: Mapping[str, Mapping[str, float]],
                     state_dist: Mapping[str, float], name: str = "delegation") -> StageGame:
    """Delegation game with a safe action.

    Player 2 either delegates (``D``) or plays safe (``S``), in which case
    the decision is still delegated with probability ``eps``.  Undelegated
    play pays everyone 0.  ``u1_table[state][action]`` and ``u2_table`` give
    payoffs when the long-run player decides.

    The public signal reveals the long-run player's action when the decision
    is delegated and is the blank outcome ``"-"`` otherwise.  Under ``D`` the
    action is recorded with probability ``1 - eps`` and blank with probability
    ``eps``, which keeps the set of possible public outcomes the same under
    both player-2 actions.
    """
    if not 0 < eps < 1:
        raise GameError(f"eps must lie in (0, 1), got {eps}")
    states, probs = _state_dist(state_dist)
    actions = tuple(map(str, next(iter(u1_table.values()))))
    n, m = len(states), len(actions)
    base1 = np.zeros((n, m))
    base2 = np.zeros((n, m))
    for i, s in enumerate(states):
        for j, a in enumerate(actions):
            try:
                base1[i, j] = u1_table[s][a]
                base2[i, j] = u2_table[s][a]
            except KeyError as exc:
                raise GameError(f"payoff table misses entry {exc}") from None
    u1 = np.stack([eps * base1, base1], axis=2)  # a2 order: S, D
    u2 = np.stack([eps * base2, base2], axis=2)
    rho1 = np.zeros((m + 1, m, 2))
    for j in range(m):
        rho1[j, j, 0] = eps
        rho1[m, j, 0] = 1 - eps
        rho1[j, j, 1] = 1 - eps
        rho1[m, j, 1] = eps
    return StageGame(
        A0=("nature",), A1=actions, A2=("S", "D"), Y0=states, Y1=actions + ("-",),
        rho0=probs[:, None], rho1=rho1, u0=np.zeros((1, m)), u1=u1, u2=u2,
        name=name,
    )


def map_label(responses: Sequence[str], images: Sequence[str]) -> str:
    """Label of the player-2 action mapping message ``responses[i]`` to ``images[i]``."""
    return "|".join(f"{r}>{x}" for r, x in zip(responses, images))


def build_communication(state_dist: Mapping[str, float], R: Sequence[str],
                        v: Mapping[str, float] | Sequence[float],
                        u2: Mapping[str, Mapping[str, float]] | np.ndarray,
                        w: Mapping[str, Mapping[str, float]] | np.ndarray,
                        eps: float, name: str = "communication") -> StageGame:
    """Communication game with a lying cost.

    The long-run player (sender) observes the state, recommends a response
    ``r~`` in ``R``; the receiver's action is a map from recommendations to
    responses, so its realized response is ``a2(r~)``.  Sender payoff is
    ``(1 - eps) v(a2(r~)) - eps w(r~, state)``, receiver payoff is
    ``u2(state, a2(r~))``.  ``w`` is indexed ``[recommendation][state]``.
    """
    if not 0 < eps < 1:
        raise GameError(f"eps must lie in (0, 1), got {eps}")
    states, probs = _state_dist(state_dist)
    R = _labels("R", R)
    nR, nS = len(R), len(states)
    if isinstance(v, Mapping):
        vv = np.array([float(v[r]) for r in R])
    else:
        vv = np.asarray(v, dtype=float)
    if isinstance(u2, Mapping):
        uu2 = np.array([[float(u2[s][r]) for r in R] for s in states])
    else:
        uu2 = np.asarray(u2, dtype=float)
    if isinstance(w, Mapping):
        ww = np.array([[float(w[r][s]) for s in states] for r in R])
    else:
        ww = np.asarray(w, dtype=float)
    if vv.shape != (nR,) or uu2.shape != (nS, nR) or ww.shape != (nR, nS):
        raise GameError("communication payoff shapes do not match states and responses")
    maps = list(itertools.product(range(nR), repeat=nR))
    if len(maps) > 4096:
        from reptoolkit.errors import ScopeLimitError

        raise ScopeLimitError(f"|R|^|R| = {len(maps)} receiver maps exceed the limit 4096")
    A2 = tuple(map_label(R, [R[k] for k in mp]) for mp in maps)
    u1 = np.zeros((nS, nR, len(maps)))
    uu = np.zeros((nS, nR, len(maps)))
    for k, mp in enumerate(maps):
        for j in range(nR):
            u1[:, j, k] = (1 - eps) * vv[mp[j]] - eps * ww[j, :]
            uu[:, j, k] = uu2[:, mp[j]]
    rho1 = np.repeat(np.eye(nR)[:, :, None], len(maps), axis=2)
    return StageGame(
        A0=("nature",), A1=R, A2=A2, Y0=states, Y1=R,
        rho0=probs[:, None], rho1=rho1, u0=np.zeros((1, nR)), u1=u1, u2=uu,
        name=name,
    )


def canonical(name: str) -> StageGame:
    """Canonical deterrence/trust instances by name (``D1``, ``D2``, ``T1``)."""
    if name in ("D1", "D2"):
        return build_deterrence(**CANONICAL[name], name=name)
    if name == "T1":
        return build_trust(**CANONICAL[name], name=name)
    raise GameError(f"unknown canonical game {name!r}")
