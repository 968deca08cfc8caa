"""Finite optimal transport in the maximization sense.

The long-run player's problem, given the marginal ``rho`` over private
signals and ``phi`` over actions, is to pick the coupling that maximizes
expected payoff ``sum cost[y, a] * gamma[y, a]``.  A coupling is the unique
maximizer exactly when every non-trivial reassignment cycle over its
support strictly lowers the total payoff; this module decides that
condition and produces exchange cycles as certificates when it fails.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from reptoolkit.errors import GameError, ScopeLimitError
from reptoolkit.stage_game import Coupling
from reptoolkit.tolerances import get_tolerances

MAX_CYCLE_ACTIONS = 8
MAX_BRUTE_CELLS = 16


class Uniqueness(str, enum.Enum):
    UNIQUE = "unique"
    NON_UNIQUE = "non_unique"
    MARGINAL = "marginal"


def _default_labels(prefix: str, n: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(n))


@dataclass(frozen=True)
class OtInstance:
    cost: np.ndarray
    rho: np.ndarray
    phi: np.ndarray
    y_labels: tuple[str, ...] | None = None
    a_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        cost = np.array(self.cost, dtype=float)
        rho = np.array(self.rho, dtype=float)
        phi = np.array(self.phi, dtype=float)
        if cost.ndim != 2 or rho.shape != (cost.shape[0],) or phi.shape != (cost.shape[1],):
            raise GameError(f"OT shapes disagree: cost {cost.shape}, rho {rho.shape}, phi {phi.shape}")
        if not np.all(np.isfinite(cost)):
            raise GameError("OT cost has non-finite entries")
        if np.any(rho < 0) or np.any(phi < 0):
            raise GameError("OT marginals have negative entries")
        if abs(rho.sum() - phi.sum()) > 1e-9:
            raise GameError(f"OT marginals have different mass: {rho.sum()!r} vs {phi.sum()!r}")
        if abs(rho.sum() - 1.0) > 1e-9:
            raise GameError(f"OT marginals must be probability vectors (mass {rho.sum()!r})")
        for arr in (cost, rho, phi):
            arr.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "phi", phi)
        m, n = cost.shape
        object.__setattr__(self, "y_labels", tuple(self.y_labels or _default_labels("y", m)))
        object.__setattr__(self, "a_labels", tuple(self.a_labels or _default_labels("a", n)))


@dataclass(frozen=True)
class ExchangeCycle:
    """Reassignment cycle ``(y_i, a_i) -> (y_i, a_{i+1})`` over a support.

    ``pairs`` holds index pairs; ``gain`` is the payoff of the original
    pairs minus the payoff of the shifted ones.  A gain at or below zero
    means the shifted assignment does at least as well.
    """

    pairs: tuple[tuple[int, int], ...]
    gain: float
    y_labels: tuple[str, ...] | None = None
    a_labels: tuple[str, ...] | None = None

    @property
    def shifted(self) -> tuple[tuple[int, int], ...]:
        n = len(self.pairs)
        return tuple((self.pairs[k][0], self.pairs[(k + 1) % n][1]) for k in range(n))

    def is_admissible(self) -> bool:
        return sorted(self.pairs) != sorted(self.shifted)

    def recompute_gain(self, cost: np.ndarray) -> float:
        c = np.asarray(cost)
        return float(sum(c[i, j] for i, j in self.pairs) - sum(c[i, j] for i, j in self.shifted))

    def labelled(self) -> list[tuple[str, str]]:
        ys = self.y_labels or _default_labels("y", 1 + max(i for i, _ in self.pairs))
        as_ = self.a_labels or _default_labels("a", 1 + max(j for _, j in self.pairs))
        return [(ys[i], as_[j]) for i, j in self.pairs]

    def as_dict(self) -> dict:
        ys, as_ = self.y_labels, self.a_labels
        out = {"gain": self.gain}
        if ys is not None and as_ is not None:
            out["pairs"] = [[ys[i], as_[j]] for i, j in self.pairs]
            out["shifted"] = [[ys[i], as_[j]] for i, j in self.shifted]
        else:
            out["pairs"] = [list(p) for p in self.pairs]
            out["shifted"] = [list(p) for p in self.shifted]
        return out


def apply_exchange(mass: np.ndarray, cycle: ExchangeCycle) -> np.ndarray:
    """Move the smallest mass on the cycle's pairs onto the shifted pairs.

    The result has the same marginals; its objective changes by
    ``-amount * gain``.
    """
    out = np.array(mass, dtype=float)
    amount = min(out[i, j] for i, j in cycle.pairs)
    for i, j in cycle.pairs:
        out[i, j] -= amount
    for i, j in cycle.shifted:
        out[i, j] += amount
    out[np.abs(out) < 1e-15] = 0.0
    return out


# cycle search


def _simple_cycles(nodes: Sequence[int]):
    """Directed simple cycles (length >= 2) of the complete digraph on ``nodes``.

    Each cycle is listed once, rotated so that its smallest node comes first.
    """
    nodes = sorted(nodes)

    def extend(path, used):
        if len(path) >= 2:
            yield tuple(path)
        for v in nodes:
            if v > path[0] and v not in used:
                used.add(v)
                path.append(v)
                yield from extend(path, used)
                path.pop()
                used.discard(v)

    for s in nodes:
        yield from extend([s], {s})


def _best_assignment(options: list[dict[int, float]]):
    """Minimize the sum of per-edge costs over signal choices not all equal.

    ``options[k]`` maps each admissible signal index for edge ``k`` to its
    cost.  A cycle whose edges all use the same signal is its own shift, so
    it is excluded.  Returns ``(total, choice)`` or ``None``.
    """
    mins = [min(o.values()) for o in options]
    argmins = [sorted(x for x, c in o.items() if c == m) for o, m in zip(options, mins)]
    picks = [a[0] for a in argmins]
    if len(set(picks)) > 1:
        return sum(mins), picks
    x0 = picks[0]
    # the independent minimum uses one signal everywhere; try an alternative argmin first
    for k, a in enumerate(argmins):
        if len(a) > 1:
            alt = list(picks)
            alt[k] = a[1]
            return sum(mins), alt
    best = None
    for k, o in enumerate(options):
        others = [(c, x) for x, c in o.items() if x != x0]
        if not others:
            continue
        c, x = min(others)
        total = sum(mins) - mins[k] + c
        if best is None or total < best[0]:
            alt = list(picks)
            alt[k] = x
            best = (total, alt)
    return best


def min_cycle_gain(S: Iterable[tuple[int, int]], cost, y_labels=None, a_labels=None):
    """Smallest gain over admissible simple reassignment cycles in ``S``.

    Returns ``(gain, cycle)``; ``(inf, None)`` when ``S`` admits no
    admissible cycle (for instance when it uses a single action).

    Any admissible cyclic reassignment decomposes, after deleting steps that
    keep the action fixed, into cycles over distinct actions.  A cycle over
    distinct actions is inadmissible only when every step uses the same
    signal, and then its gain is exactly zero, so searching cycles over
    distinct actions with not-all-equal signal choices is complete for the
    sign tests used here.
    """
    c = np.asarray(cost, dtype=float)
    pairs = sorted(set((int(i), int(j)) for i, j in S))
    if not pairs:
        raise GameError("support must be non-empty")
    rows_of: dict[int, list[int]] = {}
    for i, j in pairs:
        rows_of.setdefault(j, []).append(i)
    actions = sorted(rows_of)
    if len(actions) > MAX_CYCLE_ACTIONS:
        raise ScopeLimitError(f"cycle search over {len(actions)} actions exceeds limit {MAX_CYCLE_ACTIONS}")
    best_gain, best_cycle = np.inf, None
    for cyc in _simple_cycles(actions):
        L = len(cyc)
        options = [
            {x: c[x, cyc[k]] - c[x, cyc[(k + 1) % L]] for x in rows_of[cyc[k]]}
            for k in range(L)
        ]
        res = _best_assignment(options)
        if res is None:
            continue
        _, choice = res
        cyc_pairs = tuple((choice[k], cyc[k]) for k in range(L))
        candidate = ExchangeCycle(cyc_pairs, 0.0, y_labels, a_labels)
        gain = candidate.recompute_gain(c)
        if gain < best_gain:
            best_gain = gain
            best_cycle = ExchangeCycle(cyc_pairs, gain,
                                       tuple(y_labels) if y_labels else None,
                                       tuple(a_labels) if a_labels else None)
    return best_gain, best_cycle


def is_strictly_cm(S, cost, y_labels=None, a_labels=None):
    """True iff every admissible cycle over ``S`` has gain above ``eps_cm``.

    Returns ``(verdict, cycle)`` with a cycle of gain ``<= eps_cm`` on failure.
    """
    gain, cyc = min_cycle_gain(S, cost, y_labels, a_labels)
    if gain > get_tolerances().cm:
        return True, None
    return False, cyc


def is_cm(S, cost, y_labels=None, a_labels=None):
    """Weak version: violation iff some cycle has gain below ``-eps_cm``."""
    gain, cyc = min_cycle_gain(S, cost, y_labels, a_labels)
    if gain >= -get_tolerances().cm:
        return True, None
    return False, cyc


def classify_gain(gain: float) -> Uniqueness:
    eps = get_tolerances().cm
    if gain > eps:
        return Uniqueness.UNIQUE
    if gain < -eps:
        return Uniqueness.NON_UNIQUE
    return Uniqueness.MARGINAL


def is_unique_solution(gamma: Coupling | np.ndarray, cost):
    """Tri-state verdict on whether ``gamma`` uniquely solves OT on its own marginals.

    Returns ``(Uniqueness, cycle)``; the cycle attains the minimal gain and
    is ``None`` only when the verdict is unique because no admissible cycle
    exists.
    """
    if isinstance(gamma, Coupling):
        S, ys, as_ = gamma.support(), gamma.y_labels, gamma.a_labels
    else:
        mass = np.asarray(gamma, dtype=float)
        S = [(int(i), int(j)) for i, j in zip(*np.nonzero(mass > get_tolerances().support))]
        ys = as_ = None
    gain, cyc = min_cycle_gain(S, cost, ys, as_)
    verdict = classify_gain(gain)
    return verdict, (None if verdict is Uniqueness.UNIQUE else cyc)


# solver


@dataclass(frozen=True)
class OtSolution:
    coupling: Coupling
    value: float
    dual_row: np.ndarray
    dual_col: np.ndarray
    unique: Uniqueness
    certificate: ExchangeCycle | None

    def as_dict(self) -> dict:
        ys, as_ = self.coupling.y_labels, self.coupling.a_labels
        return {
            "value": self.value,
            "coupling": self.coupling.as_dict(),
            "dual_row": {y: float(v) for y, v in zip(ys, self.dual_row)},
            "dual_col": {a: float(v) for a, v in zip(as_, self.dual_col)},
            "unique": self.unique.value,
            "certificate": None if self.certificate is None else self.certificate.as_dict(),
        }


def _transport_constraints(m: int, n: int):
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    return A


def _duals_ok(C, x, u, v, tol=1e-9) -> bool:
    red = C - u[:, None] - v[None, :]
    if red.max() > tol:
        return False
    return bool(np.all(np.abs(red[x > 1e-12]) <= tol))


def solve_ot(inst: OtInstance) -> OtSolution:
    """Maximize expected payoff over couplings with the given marginals.

    Rows and columns with zero mass are removed before solving and put back
    as zeros; their dual values are set to the smallest dual-feasible value.
    The primal is solved with the HiGHS LP solver; the dual multipliers are
    checked for feasibility and complementary slackness and re-solved from
    the dual LP if the check fails.
    """
    rows = np.flatnonzero(inst.rho > 0)
    cols = np.flatnonzero(inst.phi > 0)
    C = inst.cost[np.ix_(rows, cols)]
    m, n = C.shape
    A = _transport_constraints(m, n)
    b = np.concatenate([inst.rho[rows], inst.phi[cols]])
    res = linprog(-C.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        raise GameError(f"transport LP failed: {res.message}")
    x = np.clip(res.x, 0.0, None).reshape(m, n)
    x[x < 1e-15] = 0.0
    lam = -np.asarray(res.eqlin.marginals)
    u, v = lam[:m], lam[m:]
    if not _duals_ok(C, x, u, v):
        # min rho.u + phi.v  s.t.  u_i + v_j >= C_ij
        dres = linprog(b, A_ub=-A.T, b_ub=-C.ravel(), bounds=(None, None), method="highs")
        if dres.status != 0:
            raise GameError(f"transport dual LP failed: {dres.message}")
        u, v = dres.x[:m], dres.x[m:]
    mass = np.zeros_like(inst.cost)
    mass[np.ix_(rows, cols)] = x
    mass /= mass.sum()
    du = np.zeros(inst.cost.shape[0])
    dv = np.zeros(inst.cost.shape[1])
    du[rows] = u
    dv[cols] = v
    for i in np.setdiff1d(np.arange(inst.cost.shape[0]), rows):
        du[i] = np.max(inst.cost[i, cols] - dv[cols])
    for j in np.setdiff1d(np.arange(inst.cost.shape[1]), cols):
        dv[j] = np.max(inst.cost[:, j] - du)
    coupling = Coupling(mass, inst.y_labels, inst.a_labels)
    verdict, cyc = is_unique_solution(coupling, inst.cost)
    return OtSolution(
        coupling=coupling,
        value=float(np.sum(inst.cost * mass)),
        dual_row=du,
        dual_col=dv,
        unique=verdict,
        certificate=cyc,
    )


def check_dual_certificate(inst: OtInstance, sol: OtSolution, tol: float = 1e-9) -> bool:
    """Dual feasibility, complementary slackness and zero duality gap."""
    mass = sol.coupling.mass
    if np.max(np.abs(mass.sum(axis=1) - inst.rho)) > tol:
        return False
    if np.max(np.abs(mass.sum(axis=0) - inst.phi)) > tol:
        return False
    red = inst.cost - sol.dual_row[:, None] - sol.dual_col[None, :]
    if red.max() > tol:
        return False
    if np.any(np.abs(red[mass > 1e-12]) > tol):
        return False
    dual_value = inst.rho @ sol.dual_row + inst.phi @ sol.dual_col
    return abs(dual_value - sol.value) <= tol


def comonotone_coupling(rho, phi, order_y: Sequence[int], order_a: Sequence[int],
                        y_labels=None, a_labels=None) -> Coupling:
    """North-west corner coupling after sorting both sides from highest to lowest.

    ``order_y`` and ``order_a`` list indices from the highest element down.
    """
    rho = np.asarray(rho, dtype=float)
    phi = np.asarray(phi, dtype=float)
    oy, oa = list(order_y), list(order_a)
    if sorted(oy) != list(range(rho.size)) or sorted(oa) != list(range(phi.size)):
        raise GameError("orders must be permutations of the marginal indices")
    mass = np.zeros((rho.size, phi.size))
    r = rho[oy].copy()
    p = phi[oa].copy()
    i = j = 0
    while i < len(r) and j < len(p):
        q = min(r[i], p[j])
        mass[oy[i], oa[j]] += q
        r[i] -= q
        p[j] -= q
        if r[i] <= 1e-15:
            i += 1
        elif p[j] <= 1e-15:
            j += 1
        else:  # pragma: no cover - cannot happen since q is the smaller remainder
            raise AssertionError("north-west corner rule stalled")
    return Coupling(mass, y_labels or _default_labels("y", rho.size), a_labels or _default_labels("a", phi.size))


# brute-force oracle


@dataclass(frozen=True)
class BruteForceResult:
    value: float
    vertices: tuple[np.ndarray, ...]
    optimal: tuple[np.ndarray, ...]

    @property
    def unique(self) -> bool:
        return len(self.optimal) == 1


def _spanning_trees(m: int, n: int):
    """Yield spanning trees of the complete bipartite graph K_{m,n} as cell lists."""
    cells = [(i, j) for i in range(m) for j in range(n)]
    need = m + n - 1

    def find(parent, a):
        while parent[a] != a:
            a = parent[a]
        return a

    def rec(k, chosen, parent):
        if len(chosen) == need:
            yield list(chosen)
            return
        if len(cells) - k < need - len(chosen):
            return
        i, j = cells[k]
        ri, rj = find(parent, i), find(parent, m + j)
        if ri != rj:
            merged = list(parent)
            merged[ri] = rj
            chosen.append((i, j))
            yield from rec(k + 1, chosen, merged)
            chosen.pop()
        yield from rec(k + 1, chosen, parent)

    yield from rec(0, [], list(range(m + n)))


def _basic_solution(tree, rho, phi):
    """Solve the transport equalities on a spanning tree by peeling leaves."""
    m, n = rho.size, phi.size
    supply = np.concatenate([rho, phi]).astype(float)
    edges = {(i, m + j) for i, j in tree}
    x = np.zeros((m, n))
    while edges:
        deg: dict[int, int] = {}
        for a, b in edges:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        leaf = min(v for v, d in deg.items() if d == 1)
        edge = next(e for e in edges if leaf in e)
        other = edge[0] if edge[1] == leaf else edge[1]
        val = supply[leaf]
        x[edge[0], edge[1] - m] = val
        supply[other] -= val
        supply[leaf] = 0.0
        edges.discard(edge)
    return x


def brute_force_ot(inst: OtInstance, vertex_tol: float = 1e-12) -> BruteForceResult:
    """Enumerate every vertex of the transportation polytope.

    Vertices are basic feasible solutions, one per spanning tree of the
    bipartite cell graph whose basic values are non-negative.  The optimum of
    a linear objective over a polytope is unique exactly when a single vertex
    attains it, since an optimal face with two points has two vertices.
    """
    m, n = inst.cost.shape
    if m * n > MAX_BRUTE_CELLS:
        raise ScopeLimitError(f"brute-force OT limited to {MAX_BRUTE_CELLS} cells, got {m * n}")
    seen: dict[tuple, np.ndarray] = {}
    for tree in _spanning_trees(m, n):
        x = _basic_solution(tree, inst.rho, inst.phi)
        if x.min() < -1e-12:
            continue
        x = np.clip(x, 0.0, None)
        key = tuple(np.round(x, 12).ravel())
        seen.setdefault(key, x)
    vertices = tuple(seen[k] for k in sorted(seen))
    values = np.array([float(np.sum(inst.cost * v)) for v in vertices])
    best = float(values.max())
    optimal = tuple(v for v, val in zip(vertices, values) if val >= best - vertex_tol)
    return BruteForceResult(best, vertices, optimal)


def supports_up_to(ny: int, na: int):
    """All supports with every row occupied, as sorted pair lists."""
    row_sets = [s for r in range(1, na + 1) for s in itertools.combinations(range(na), r)]
    for choice in itertools.product(row_sets, repeat=ny):
        yield [(i, j) for i, js in enumerate(choice) for j in js]
