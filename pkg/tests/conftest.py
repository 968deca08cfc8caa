import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from reptoolkit.mechanism_order import Mechanism
from reptoolkit.stage_game import StageGame, Strategy, canonical

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def d1() -> StageGame:
    return canonical("D1")


@pytest.fixture(scope="session")
def d2() -> StageGame:
    return canonical("D2")


@pytest.fixture(scope="session")
def t1() -> StageGame:
    return canonical("T1")


def random_signal_game(rng: np.random.Generator, ny: int, na: int, n2: int, u1=None) -> StageGame:
    """Game where nature draws the signal and the public signal reveals the action."""
    rho0 = rng.dirichlet(np.ones(ny))[:, None]
    rho0 = np.maximum(rho0, 0.02)
    rho0 /= rho0.sum()
    return StageGame(
        A0=("nature",),
        A1=tuple(f"a{j}" for j in range(na)),
        A2=tuple(f"b{k}" for k in range(n2)),
        Y0=tuple(f"y{i}" for i in range(ny)),
        Y1=tuple(f"a{j}" for j in range(na)),
        rho0=rho0,
        rho1=np.repeat(np.eye(na)[:, :, None], n2, axis=2),
        u0=np.zeros((1, na)),
        u1=rng.normal(size=(ny, na, n2)) if u1 is None else u1,
        u2=rng.normal(size=(ny, na, n2)),
    )


def supermodular_game(rng, ny, na, n2, margin=0.05):
    """Random game whose u1 is strictly supermodular along the index orders for every a2."""
    u1 = np.empty((ny, na, n2))
    for k in range(n2):
        f = np.cumsum(rng.uniform(margin, 1.0, ny))
        g = np.cumsum(rng.uniform(margin, 1.0, na))
        u1[:, :, k] = rng.uniform(0.5, 2.0) * np.outer(f, g)
        u1[:, :, k] += rng.normal(size=ny)[:, None] + rng.normal(size=na)[None, :]
    return random_signal_game(rng, ny, na, n2, u1=u1)


def random_support_strategy(rng, game):
    ny, na = len(game.Y0), len(game.A1)
    rows = np.zeros((ny, na))
    for i in range(ny):
        k = rng.integers(1, min(na, 2) + 1)
        cols = rng.choice(na, size=k, replace=False)
        rows[i, cols] = rng.dirichlet(np.ones(k))
    return Strategy(rows, game.Y0, game.A1)


def random_mechanism(rng, n_states, n_resp, density):
    supp = rng.random((n_states, n_resp)) < density
    for i in range(n_states):
        if not supp[i].any():
            supp[i, rng.integers(n_resp)] = True
    rows = supp * rng.uniform(0.1, 1.0, supp.shape)
    return Mechanism(tuple(f"s{i}" for i in range(n_states)), tuple(f"r{j}" for j in range(n_resp)),
                     rows / rows.sum(axis=1, keepdims=True))


def precedence_orderable(mech):
    """Oracle: for each state order, the forced response precedences must be acyclic."""
    supp = mech.rows > 0
    n = len(mech.responses)
    for perm in itertools.permutations(range(len(mech.states))):
        succ = {r: set() for r in range(n)}
        for p, lo in enumerate(perm):
            for hi in perm[p + 1:]:
                for a in np.flatnonzero(supp[lo]):
                    for b in np.flatnonzero(supp[hi]):
                        if a != b:
                            succ[a].add(b)
        # Kahn's algorithm
        indeg = {r: 0 for r in range(n)}
        for r in succ:
            for b in succ[r]:
                indeg[b] += 1
        ready = [r for r in range(n) if indeg[r] == 0]
        seen = 0
        while ready:
            r = ready.pop()
            seen += 1
            for b in succ[r]:
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
        if seen == n:
            return True
    return False
