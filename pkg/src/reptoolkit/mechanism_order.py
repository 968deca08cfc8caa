"""Orderability of communication mechanisms.

A mechanism maps states to distributions over recommended responses.  It
is monotone under some pair of orders exactly when its support graph (a
bipartite graph on states and responses) has no cycle and contains
neither of two seven-vertex patterns ("forbidden triples").  When both are
absent, orders are built from a longest path in each tree component.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from reptoolkit.errors import DomainError, GameError, ScopeLimitError
from reptoolkit.reputation import OrderPair, is_monotone, is_supermodular
from reptoolkit.stage_game import StageGame, Strategy, build_communication
from reptoolkit.tolerances import get_tolerances

TRIPLE_LIMIT = 64


@dataclass(frozen=True)
class Mechanism:
    states: tuple[str, ...]
    responses: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        s = Strategy(self.rows, self.states, self.responses)
        object.__setattr__(self, "states", s.y_labels)
        object.__setattr__(self, "responses", s.a_labels)
        object.__setattr__(self, "rows", s.rows)

    @classmethod
    def from_support(cls, states: Sequence[str], responses: Sequence[str],
                     support: Mapping[str, Sequence[str]]) -> "Mechanism":
        """Uniform randomization over each state's listed responses."""
        rows = np.zeros((len(states), len(responses)))
        for i, s in enumerate(states):
            targets = list(support[s])
            for r in targets:
                rows[i, list(responses).index(r)] = 1.0 / len(targets)
        return cls(tuple(states), tuple(responses), rows)

    def as_strategy(self) -> Strategy:
        return Strategy(self.rows, self.states, self.responses, "mechanism")

    def as_dict(self) -> dict:
        return {
            "states": list(self.states),
            "responses": list(self.responses),
            "rows": {s: {r: float(self.rows[i, j]) for j, r in enumerate(self.responses)}
                     for i, s in enumerate(self.states)},
        }


@dataclass(frozen=True)
class MechGraph:
    """Bipartite support graph; vertices are ``("s", i)`` and ``("r", j)``."""

    states: tuple[str, ...]
    responses: tuple[str, ...]
    state_nbrs: tuple[tuple[int, ...], ...]
    response_nbrs: tuple[tuple[int, ...], ...]

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nb in enumerate(self.state_nbrs) for j in nb]

    def neighbors(self, v):
        kind, k = v
        if kind == "s":
            return [("r", j) for j in self.state_nbrs[k]]
        return [("s", i) for i in self.response_nbrs[k]]

    def vertices(self):
        return [("s", i) for i in range(len(self.states))] + [("r", j) for j in range(len(self.responses))]

    def name(self, v) -> str:
        return self.states[v[1]] if v[0] == "s" else self.responses[v[1]]

    def transpose(self) -> "MechGraph":
        return MechGraph(self.responses, self.states, self.response_nbrs, self.state_nbrs)


@dataclass(frozen=True)
class Cycle:
    vertices: tuple  # alternating, starting with a state

    def edges(self, g: MechGraph) -> list[tuple[str, str]]:
        vs = list(self.vertices)
        out = []
        for a, b in zip(vs, vs[1:] + vs[:1]):
            s, r = (a, b) if a[0] == "s" else (b, a)
            out.append((g.states[s[1]], g.responses[r[1]]))
        return out


@dataclass(frozen=True)
class Triple:
    kind: int
    states: tuple[int, ...]
    responses: tuple[int, ...]


@dataclass(frozen=True)
class OrderCertificate:
    orders: OrderPair | None = None
    cycle: list | None = None  # list of (state, response) edges
    triple: dict | None = None

    @property
    def orderable(self) -> bool:
        return self.orders is not None

    def as_dict(self) -> dict:
        if self.orders is not None:
            return {"orderable": True, "orders": self.orders.as_dict()}
        if self.cycle is not None:
            return {"orderable": False, "cycle": [list(e) for e in self.cycle]}
        return {"orderable": False, "triple": self.triple}


def build_graph(mech: Mechanism) -> MechGraph:
    tol = get_tolerances().support
    supp = mech.rows > tol
    return MechGraph(
        mech.states, mech.responses,
        tuple(tuple(int(j) for j in np.flatnonzero(supp[i])) for i in range(len(mech.states))),
        tuple(tuple(int(i) for i in np.flatnonzero(supp[:, j])) for j in range(len(mech.responses))),
    )


def _vkey(v):
    return (0 if v[0] == "s" else 1, v[1])


def _bfs(g: MechGraph, root):
    parent = {root: None}
    dist = {root: 0}
    q = deque([root])
    while q:
        x = q.popleft()
        for y in g.neighbors(x):
            if y not in dist:
                dist[y] = dist[x] + 1
                parent[y] = x
                q.append(y)
    return dist, parent


def _path_to(parent, v):
    out = []
    while v is not None:
        out.append(v)
        v = parent[v]
    return out[::-1]


def find_cycle(g: MechGraph) -> Cycle | None:
    """A shortest cycle of the support graph, or ``None`` if it is a forest.

    Each vertex serves as a breadth-first root; a non-tree edge closes a
    cycle of length ``dist[x] + dist[y] + 1``.  At the minimum over roots
    the two tree paths share only the root, so joining them gives a simple
    cycle.  The result is rotated to start at its smallest state and
    oriented towards its smaller neighbouring response.
    """
    best = None
    for root in g.vertices():
        dist, parent = {root: 0}, {root: None}
        q = deque([root])
        while q:
            x = q.popleft()
            for y in g.neighbors(x):
                if y not in dist:
                    dist[y] = dist[x] + 1
                    parent[y] = x
                    q.append(y)
                elif parent[x] != y:
                    length = dist[x] + dist[y] + 1
                    if best is None or length < best[0]:
                        best = (length, _path_to(parent, x), _path_to(parent, y))
    if best is None:
        return None
    _, px, py = best
    cyc = px + py[::-1][:-1]
    start = min((v for v in cyc if v[0] == "s"), key=_vkey)
    k = cyc.index(start)
    cyc = cyc[k:] + cyc[:k]
    if len(cyc) > 2 and _vkey(cyc[-1]) < _vkey(cyc[1]):
        cyc = [cyc[0]] + cyc[1:][::-1]
    return Cycle(tuple(cyc))


def _distinct_reps(choices: list[list[int]]):
    """First tuple (lexicographically) of distinct representatives."""
    def rec(k, used):
        if k == len(choices):
            return []
        for c in choices[k]:
            if c not in used:
                rest = rec(k + 1, used | {c})
                if rest is not None:
                    return [c] + rest
        return None

    return rec(0, frozenset())


def _type1(state_nbrs, response_nbrs):
    """Three responses, a hub state linked to all three, and three distinct other states."""
    nr = len(response_nbrs)
    for trio in itertools.combinations(range(nr), 3):
        hubs = set(response_nbrs[trio[0]]) & set(response_nbrs[trio[1]]) & set(response_nbrs[trio[2]])
        for hub in sorted(hubs):
            reps = _distinct_reps([[i for i in response_nbrs[r] if i != hub] for r in trio])
            if reps is not None:
                return tuple(reps) + (hub,), trio
    return None


def find_forbidden_triple(g: MechGraph) -> Triple | None:
    """Search type 1 (3 responses, 4 states), then type 2 (3 states, 4 responses)."""
    if len(g.states) > TRIPLE_LIMIT or len(g.responses) > TRIPLE_LIMIT:
        raise ScopeLimitError(f"forbidden-triple search limited to {TRIPLE_LIMIT} states and responses")
    found = _type1(g.state_nbrs, g.response_nbrs)
    if found is not None:
        return Triple(1, found[0], found[1])
    found = _type1(g.response_nbrs, g.state_nbrs)
    if found is not None:
        responses, states = found
        return Triple(2, states, responses)
    return None


def is_forbidden_triple(g: MechGraph, t: Triple) -> bool:
    """Direct containment check of a claimed triple."""
    S = [set(n) for n in g.state_nbrs]
    if t.kind == 1:
        (s1, s2, s3, s4), (r1, r2, r3) = t.states, t.responses
        return (len({s1, s2, s3, s4}) == 4 and len({r1, r2, r3}) == 3
                and r1 in S[s1] and r2 in S[s2] and r3 in S[s3] and {r1, r2, r3} <= S[s4])
    (s1, s2, s3), (r1, r2, r3, r4) = t.states, t.responses
    return (len({s1, s2, s3}) == 3 and len({r1, r2, r3, r4}) == 4
            and {r1, r4} <= S[s1] and {r2, r4} <= S[s2] and {r3, r4} <= S[s3])


def is_cycle(g: MechGraph, c: Cycle) -> bool:
    vs = list(c.vertices)
    if len(vs) < 4 or len(set(vs)) != len(vs):
        return False
    return all(b in g.neighbors(a) for a, b in zip(vs, vs[1:] + vs[:1]))


def _components(g: MechGraph):
    seen = set()
    comps = []
    for v in g.vertices():
        if v in seen:
            continue
        dist, _ = _bfs(g, v)
        seen |= set(dist)
        comps.append(sorted(dist, key=_vkey))
    return comps


def _farthest(dist):
    far = max(dist.values())
    return min((v for v, d in dist.items() if d == far), key=_vkey)


def _component_keys(g: MechGraph, comp) -> dict:
    """Position keys for one tree component, built from a longest path.

    Path vertices get their position along the path; every other vertex
    gets the key of the path vertex it hangs from, which places an
    off-path state next to its only response and vice versa.
    """
    start = next((v for v in comp if v[0] == "s"), comp[0])
    dist, _ = _bfs(g, start)
    u = _farthest(dist)
    dist, parent = _bfs(g, u)
    v = _farthest(dist)
    path = _path_to(parent, v)  # from u to v
    states_on = [x for x in path if x[0] == "s"]
    if len(states_on) >= 2 and _vkey(states_on[0]) > _vkey(states_on[-1]):
        path = path[::-1]
    keys = {x: float(p) for p, x in enumerate(path)}
    # multi-source BFS from the path assigns each hanging vertex its anchor's key
    q = deque(path)
    while q:
        x = q.popleft()
        for y in sorted(g.neighbors(x), key=_vkey):
            if y not in keys:
                keys[y] = keys[x]
                q.append(y)
    return keys


def orderable(mech: Mechanism) -> OrderCertificate:
    """Orders under which ``mech`` is monotone, or a cycle / triple certificate."""
    g = build_graph(mech)
    cyc = find_cycle(g)
    if cyc is not None:
        return OrderCertificate(cycle=cyc.edges(g))
    triple = find_forbidden_triple(g)
    if triple is not None:
        return OrderCertificate(triple={
            "type": triple.kind,
            "states": [g.states[i] for i in triple.states],
            "responses": [g.responses[j] for j in triple.responses],
        })
    comps = _components(g)
    with_states = sorted((c for c in comps if any(v[0] == "s" for v in c)),
                         key=lambda c: min(v[1] for v in c if v[0] == "s"))
    bare = [c for c in comps if not any(v[0] == "s" for v in c)]
    ranked: list[tuple] = []
    for rank, comp in enumerate(with_states):
        keys = _component_keys(g, comp)
        ranked += [(rank, keys[v], v[1], v) for v in comp]
    ranked += [(len(with_states), 0.0, c[0][1], c[0]) for c in bare]
    ranked.sort()
    states_up = [g.states[v[1]] for *_, v in ranked if v[0] == "s"]
    resp_up = [g.responses[v[1]] for *_, v in ranked if v[0] == "r"]
    orders = OrderPair(tuple(reversed(states_up)), tuple(reversed(resp_up)))
    if not verify_order(mech, orders):  # pragma: no cover - guarded by property tests
        raise AssertionError("constructed orders fail the monotonicity check")
    return OrderCertificate(orders=orders)


def verify_order(mech: Mechanism, orders: OrderPair) -> bool:
    return is_monotone(mech.as_strategy(), orders)[0]


def exhaustive_orderable(mech: Mechanism, limit: int = 5040) -> bool:
    """Brute-force search over every pair of orders (test oracle)."""
    from math import factorial

    n = factorial(len(mech.states)) * factorial(len(mech.responses))
    if n > limit:
        raise ScopeLimitError(f"{n} order pairs exceed the exhaustive limit {limit}")
    s = mech.as_strategy()
    for oy in itertools.permutations(mech.states):
        for oa in itertools.permutations(mech.responses):
            if is_monotone(s, OrderPair(oy, oa))[0]:
                return True
    return False


# lying-cost games


@dataclass(frozen=True)
class MechanismEnv:
    """A mechanism with the primitives of the sender-receiver game around it.

    ``v[r]`` is the sender's payoff from the receiver's response ``r``;
    ``u2[state][r]`` is the receiver's payoff; ``state_dist`` is the prior.
    """

    mechanism: Mechanism
    state_dist: Mapping[str, float]
    v: Mapping[str, float]
    u2: Mapping[str, Mapping[str, float]]


def rank_cost(orders: OrderPair, states: Sequence[str], responses: Sequence[str]) -> np.ndarray:
    """Lying cost ``w[r, state]``, strictly submodular under ``orders`` and scaled to [0, 1]."""
    ry, rr = orders.ranks(states, responses)  # 0 = lowest
    nS, nR = len(states), len(responses)
    w = 1.0 - np.outer(rr + 1, ry + 1) / (nR * nS)
    span = w.max() - w.min()
    return (w - w.min()) / span if span > 0 else np.zeros_like(w)


def lying_cost_orders(env: MechanismEnv) -> OrderPair:
    cert = orderable(env.mechanism)
    if not cert.orderable:
        raise DomainError(f"mechanism is not monotone under any order: {cert.as_dict()}")
    return cert.orders


def build_lying_cost_game(env: MechanismEnv, eps: float, name: str = "lying-cost",
                          w: np.ndarray | None = None) -> StageGame:
    """Communication game with a lying cost that makes the mechanism confound-defeating.

    By default the cost is rank-based, built from the orders returned by
    :func:`orderable`.  An explicit cost ``w[r, state]`` may be passed
    instead.  Either way the sender's payoff must be strictly supermodular in
    (state, recommendation) under those orders for every receiver action;
    an explicit cost that fails this raises :class:`DomainError`.
    """
    if not 0 < eps < 1:
        raise GameError(f"eps must lie in (0, 1), got {eps}")
    mech = env.mechanism
    orders = lying_cost_orders(env)
    explicit = w is not None
    if explicit:
        w = np.asarray(w, dtype=float)
        if w.shape != (len(mech.responses), len(mech.states)):
            raise GameError("lying cost must have shape (responses, states)")
    else:
        w = rank_cost(orders, mech.states, mech.responses)
    dist = {s: env.state_dist[s] for s in mech.states}
    game = build_communication(dist, mech.responses, env.v, env.u2, w, eps, name=name)
    game = StageGame(game.A0, game.A1, game.A2, game.Y0, game.Y1, game.rho0, game.rho1,
                     game.u0, game.u1, game.u2, name=name,
                     notes=(f"orders: states {' > '.join(orders.order_y)}; responses {' > '.join(orders.order_a)}",))
    if not is_supermodular(game, orders):
        if explicit:
            raise DomainError("the given lying cost does not make u1 strictly supermodular under the mechanism's orders")
        raise AssertionError("rank-based lying cost failed to make u1 strictly supermodular")  # pragma: no cover
    return game
