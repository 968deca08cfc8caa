import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import precedence_orderable, random_mechanism
from reptoolkit.errors import DomainError, GameError, ScopeLimitError
from reptoolkit.mechanism_order import (
    Cycle,
    Mechanism,
    MechanismEnv,
    build_graph,
    build_lying_cost_game,
    exhaustive_orderable,
    find_cycle,
    find_forbidden_triple,
    is_cycle,
    is_forbidden_triple,
    orderable,
    rank_cost,
    verify_order,
)
from reptoolkit.reputation import OrderPair, TypeSpace, analyze, is_confound_defeating, is_supermodular
from reptoolkit.scenarios import builtin, parse_scenario
from reptoolkit.stage_game import Strategy


def hub_and_singletons():
    """Three states reveal one response each; a fourth state mixes over all three."""
    return Mechanism.from_support(
        ("t1", "t2", "t3", "t4"), ("r1", "r2", "r3"),
        {"t1": ["r1"], "t2": ["r2"], "t3": ["r3"], "t4": ["r1", "r2", "r3"]},
    )


def transpose(mech):
    rows = (mech.rows > 0).T.astype(float)
    return Mechanism(mech.responses, mech.states, rows / rows.sum(axis=1, keepdims=True))


class TestGraph:
    def test_hub_edges(self):
        g = build_graph(hub_and_singletons())
        assert g.state_nbrs == ((0,), (1,), (2,), (0, 1, 2))
        assert g.response_nbrs == ((0, 3), (1, 3), (2, 3))

    def test_bipooling_is_complete_bipartite(self):
        g = build_graph(parse_scenario(builtin("M2")).mechanism)
        assert len(g.edges()) == 4
        cyc = find_cycle(g)
        assert cyc.edges(g) == [("0", "1/3"), ("1", "1/3"), ("1", "2/3"), ("0", "2/3")]
        assert is_cycle(g, cyc)

    def test_deterministic_is_a_forest(self):
        mech = Mechanism.from_support(("a", "b", "c"), ("x", "y"), {"a": ["x"], "b": ["y"], "c": ["x"]})
        assert find_cycle(build_graph(mech)) is None

    def test_partition_with_shared_boundary(self):
        mech = Mechanism.from_support(("1", "2", "3"), ("a", "b"), {"1": ["a"], "2": ["a", "b"], "3": ["b"]})
        g = build_graph(mech)
        assert find_cycle(g) is None and find_forbidden_triple(g) is None

    def test_is_cycle_rejects_non_cycles(self):
        g = build_graph(hub_and_singletons())
        assert not is_cycle(g, Cycle((("s", 0), ("r", 0), ("s", 3), ("r", 1))))


class TestTriples:
    def test_hub_type_one(self):
        g = build_graph(hub_and_singletons())
        t = find_forbidden_triple(g)
        assert t.kind == 1 and t.states == (0, 1, 2, 3) and t.responses == (0, 1, 2)
        assert is_forbidden_triple(g, t)

    def test_transpose_gives_type_two(self):
        g = build_graph(transpose(hub_and_singletons()))
        t = find_forbidden_triple(g)
        assert t.kind == 2 and is_forbidden_triple(g, t)

    def test_two_responses_have_no_type_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            g = build_graph(random_mechanism(rng, 5, 2, 0.5))
            t = find_forbidden_triple(g)
            assert t is None or t.kind == 2

    def test_size_limit(self):
        mech = Mechanism(tuple(f"s{i}" for i in range(65)), ("r",), np.ones((65, 1)))
        with pytest.raises(ScopeLimitError):
            find_forbidden_triple(build_graph(mech))


class TestOrderable:
    def test_partition(self):
        cert = orderable(parse_scenario(builtin("M1")).mechanism)
        assert cert.orderable
        assert cert.orders == OrderPair(("3", "2", "1"), ("b", "a"))

    def test_bipooling_rejected_with_cycle(self):
        cert = orderable(parse_scenario(builtin("M2")).mechanism)
        assert not cert.orderable
        assert cert.as_dict()["cycle"] == [["0", "1/3"], ["1", "1/3"], ["1", "2/3"], ["0", "2/3"]]

    def test_hub_rejected_with_triple(self):
        cert = orderable(hub_and_singletons())
        assert cert.as_dict() == {"orderable": False, "triple": {
            "type": 1, "states": ["t1", "t2", "t3", "t4"], "responses": ["r1", "r2", "r3"]}}

    def test_verify_order(self):
        assert not verify_order(hub_and_singletons(), OrderPair(("t4", "t3", "t2", "t1"), ("r3", "r2", "r1")))
        const = Mechanism(("a", "b"), ("x", "y"), np.full((2, 2), 0.5))
        # a full-support constant mechanism is a 4-cycle
        assert not orderable(const).orderable
        single = Mechanism(("a", "b", "c"), ("x",), np.ones((3, 1)))
        assert verify_order(single, OrderPair(("c", "a", "b"), ("x",)))

    def test_linear_partitions_are_orderable(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(2, 7))
            cuts = np.sort(rng.choice(np.arange(1, n), size=int(rng.integers(0, n)), replace=False))
            blocks = np.split(np.arange(n), cuts)
            support = {}
            for b, block in enumerate(blocks):
                for k, s in enumerate(block):
                    targets = [f"r{b}"]
                    # boundary states may randomize into the next block
                    if k == len(block) - 1 and b + 1 < len(blocks) and rng.random() < 0.5:
                        targets.append(f"r{b + 1}")
                    support[f"s{s}"] = targets
            mech = Mechanism.from_support([f"s{s}" for s in range(n)], [f"r{b}" for b in range(len(blocks))], support)
            cert = orderable(mech)
            assert cert.orderable and verify_order(mech, cert.orders)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4), st.floats(0.2, 0.8))
    def test_soundness_against_exhaustive_search(self, seed, ns, nr, density):
        mech = random_mechanism(np.random.default_rng(seed), ns, nr, density)
        cert = orderable(mech)
        truth = exhaustive_orderable(mech)
        assert cert.orderable == truth
        if cert.orderable:
            assert verify_order(mech, cert.orders)
        else:
            g = build_graph(mech)
            cyc = find_cycle(g)
            if cert.cycle is not None:
                assert is_cycle(g, cyc)
            else:
                t = find_forbidden_triple(g)
                assert is_forbidden_triple(g, t)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4), st.floats(0.2, 0.8))
    def test_precedence_oracle_matches_exhaustive(self, seed, ns, nr, density):
        mech = random_mechanism(np.random.default_rng(seed), ns, nr, density)
        assert precedence_orderable(mech) == exhaustive_orderable(mech)

    def test_exhaustive_limit(self):
        mech = random_mechanism(np.random.default_rng(0), 5, 5, 0.3)
        with pytest.raises(ScopeLimitError):
            exhaustive_orderable(mech)


def prosecutor_env(innocent_convict=0.4):
    mech = Mechanism(("Innocent", "Guilty"), ("Acquit", "Convict"),
                     np.array([[1 - innocent_convict, innocent_convict], [0.0, 1.0]]))
    return MechanismEnv(
        mech,
        {"Innocent": 0.7, "Guilty": 0.3},
        {"Acquit": 0.0, "Convict": 1.0},
        {"Innocent": {"Acquit": 1.0, "Convict": 0.0}, "Guilty": {"Acquit": 0.0, "Convict": 1.0}},
    )


class TestLyingCost:
    def test_rank_cost_is_strictly_submodular(self):
        orders = OrderPair(("c", "b", "a"), ("z", "y", "x"))
        w = rank_cost(orders, ("a", "b", "c"), ("x", "y", "z"))  # w[response, state]
        assert w.min() == 0.0 and w.max() == 1.0
        for r_hi, r_lo in itertools.combinations(range(3)[::-1], 2):
            for s_hi, s_lo in itertools.combinations(range(3)[::-1], 2):
                assert w[r_hi, s_hi] - w[r_lo, s_hi] - w[r_hi, s_lo] + w[r_lo, s_lo] < 0

    def test_prosecutor_default_cost(self):
        game = build_lying_cost_game(prosecutor_env(), 0.1)
        # reversing both orders preserves supermodularity
        assert is_supermodular(game, OrderPair(("Guilty", "Innocent"), ("Convict", "Acquit")))
        assert is_supermodular(game, OrderPair(("Innocent", "Guilty"), ("Acquit", "Convict")))

    def test_prosecutor_scenario(self):
        sc = parse_scenario(builtin("prosecutor"))
        assert is_supermodular(sc.game, OrderPair(("Guilty", "Innocent"), ("Convict", "Acquit")))
        v = analyze(sc.game, sc.types, 0)
        assert v.confound.is_true

    def test_explicit_cost(self):
        w = np.array([[0.0, 0.0], [1.0, 0.0]])  # only convicting the innocent is costly
        game = build_lying_cost_game(prosecutor_env(), 0.1, w=w)
        assert is_supermodular(game, OrderPair(("Guilty", "Innocent"), ("Convict", "Acquit")))

    def test_explicit_cost_must_be_submodular(self):
        # penalizing a conviction of the guilty reverses the cross difference
        with pytest.raises(DomainError):
            build_lying_cost_game(prosecutor_env(), 0.1, w=np.array([[0.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(GameError):
            build_lying_cost_game(prosecutor_env(), 0.1, w=np.zeros((3, 2)))

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.2])
    def test_eps_range(self, eps):
        with pytest.raises(GameError):
            build_lying_cost_game(prosecutor_env(), eps)

    def test_unorderable_mechanism(self):
        mech = parse_scenario(builtin("M2")).mechanism
        env = MechanismEnv(mech, {"0": 0.5, "1": 0.5}, {"1/3": 0.0, "2/3": 1.0},
                           {"0": {"1/3": 1.0, "2/3": 0.0}, "1": {"1/3": 0.0, "2/3": 1.0}})
        with pytest.raises(DomainError):
            build_lying_cost_game(env, 0.1)

    def test_truthful_binary_mechanism_is_confound_defeating(self):
        mech = Mechanism(("lo", "hi"), ("L", "H"), np.eye(2))
        env = MechanismEnv(mech, {"lo": 0.5, "hi": 0.5}, {"L": 0.0, "H": 1.0},
                           {"lo": {"L": 1.0, "H": 0.0}, "hi": {"L": 0.0, "H": 1.0}})
        game = build_lying_cost_game(env, 0.1)
        star = Strategy.pure(game, ["L", "H"])
        assert is_confound_defeating(game, star).is_true
        assert analyze(game, TypeSpace.single(star), 0).bounds["theorem1"] is not None
