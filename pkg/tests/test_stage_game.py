import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reptoolkit.errors import DomainError, GameError
from reptoolkit.stage_game import (
    MixedAction,
    StageGame,
    Strategy,
    action_marginal,
    build_communication,
    build_delegation,
    build_deterrence,
    build_trust,
    canonical,
    expected_payoff,
    induced_coupling,
    payoff_tables,
    pure_strategies,
    require_valid,
    signal_distribution,
    signal_marginal,
    signal_table,
    validate_game,
)


def _toy(rho1, A2=("u", "v")):
    return StageGame(
        A0=("x",), A1=("a", "b"), A2=A2, Y0=("y",), Y1=("p", "q"),
        rho0=[[1.0]], rho1=rho1, u0=[[0.0, 0.0]],
        u1=np.zeros((1, 2, len(A2))), u2=np.zeros((1, 2, len(A2))),
    )


class TestConstruction:
    def test_d1_labels_and_shapes(self, d1):
        assert d1.A0 == ("C", "D") and d1.A1 == ("A", "F") and d1.Y0 == ("c", "d")
        assert d1.rho0.shape == (2, 2)
        assert d1.u1.shape == (2, 2, 1)

    def test_arrays_are_read_only(self, d1):
        with pytest.raises(ValueError):
            d1.u1[0, 0, 0] = 5.0

    @pytest.mark.parametrize("bad", [
        dict(rho0=[[1.2, 0.2], [-0.2, 0.8]]),
        dict(rho0=[[0.5, 0.5], [0.4, 0.5]]),
        dict(u0=[[1.0, 2.0, 3.0]]),
    ])
    def test_rejects_malformed(self, d1, bad):
        fields = dict(A0=d1.A0, A1=d1.A1, A2=d1.A2, Y0=d1.Y0, Y1=d1.Y1, rho0=d1.rho0, rho1=d1.rho1,
                      u0=d1.u0, u1=d1.u1, u2=d1.u2)
        fields.update(bad)
        with pytest.raises(GameError):
            StageGame(**fields)

    def test_rejects_duplicate_labels(self, d1):
        with pytest.raises(GameError):
            StageGame(A0=("C", "C"), A1=d1.A1, A2=d1.A2, Y0=d1.Y0, Y1=d1.Y1, rho0=d1.rho0,
                      rho1=d1.rho1, u0=d1.u0, u1=d1.u1, u2=d1.u2)

    def test_unknown_label(self, d1):
        with pytest.raises(GameError):
            d1.index("A1", "Z")

    @pytest.mark.parametrize("kw", [
        dict(p=0.5), dict(p=1.0), dict(g=0.0), dict(x=1.0), dict(y=-0.1),
    ])
    def test_deterrence_parameter_ranges(self, kw):
        params = dict(p=0.8, g=1.0, l=1.0, x=0.3, y=0.3)
        params.update(kw)
        with pytest.raises(GameError):
            build_deterrence(**params)

    def test_deterrence_low_precision_note(self):
        g = build_deterrence(p=0.6, g=1.0, l=1.0, x=0.3, y=0.3)
        assert any("threshold" in n for n in g.notes)
        assert not canonical("D1").notes

    @pytest.mark.parametrize("w,z,case", [(0.5, 0.5, "supermodular"), (-0.5, -0.5, "submodular"),
                                          (0.5, -0.5, "mixed")])
    def test_trust_case_note(self, w, z, case):
        assert build_trust(w, z).notes == (f"{case} case",)


class TestValidation:
    @pytest.mark.parametrize("name", ["D1", "D2", "T1"])
    def test_canonical_games_pass(self, name):
        assert validate_game(canonical(name)).ok

    def test_rank_deficient_public_signal(self):
        rho1 = np.array([[1.0, 1.0], [0.0, 0.0]])[:, :, None].repeat(2, axis=2)
        rep = validate_game(_toy(rho1))
        assert rep.full_support_rho0 and rep.support_independent_of_a2
        assert not rep.identified
        with pytest.raises(DomainError):
            require_valid(_toy(rho1))

    def test_support_depends_on_a2(self):
        rho1 = np.zeros((2, 2, 2))
        rho1[:, :, 0] = [[0.7, 0.2], [0.3, 0.8]]
        rho1[:, :, 1] = [[1.0, 0.2], [0.0, 0.8]]
        rep = validate_game(_toy(rho1))
        assert not rep.support_independent_of_a2
        assert rep.identified

    def test_signal_without_full_support(self, d1):
        g = StageGame(A0=d1.A0, A1=d1.A1, A2=d1.A2, Y0=d1.Y0, Y1=d1.Y1,
                      rho0=[[1.0, 0.2], [0.0, 0.8]], rho1=d1.rho1, u0=d1.u0, u1=d1.u1, u2=d1.u2)
        rep = validate_game(g)
        assert not rep.full_support_rho0 and not rep.ok
        assert rep.messages


class TestDistributions:
    def test_d1_coupling_under_cooperation(self, d1):
        af = Strategy.pure(d1, {"c": "A", "d": "F"})
        gamma = induced_coupling(d1, MixedAction.pure(d1, "A0", "C"), af)
        np.testing.assert_allclose(gamma.mass, [[0.8, 0.0], [0.0, 0.2]], atol=1e-15)
        np.testing.assert_allclose(action_marginal(d1, [1.0, 0.0], af), [0.8, 0.2])
        np.testing.assert_allclose(signal_marginal(d1, [0.0, 1.0]), [0.2, 0.8])

    def test_d1_payoffs_by_hand(self, d1):
        af = Strategy.pure(d1, ["A", "F"])
        # C: 0.8 * u1(c, A) + 0.2 * u1(d, F) = 0.8; D: 0.2 * 1 + 0.8 * 0 = 0.2
        assert expected_payoff(d1, 1, [1, 0], af, [1]) == pytest.approx(0.8, abs=1e-15)
        assert expected_payoff(d1, 1, [0, 1], af, [1]) == pytest.approx(0.2, abs=1e-15)
        # player 0 against (A, F): C gets 0.8 - 0.2 = 0.6, D gets 0.2 * 2 = 0.4
        assert expected_payoff(d1, 0, [1, 0], af, [1]) == pytest.approx(0.6, abs=1e-15)
        assert expected_payoff(d1, 0, [0, 1], af, [1]) == pytest.approx(0.4, abs=1e-15)

    def test_pure_strategy_order(self, d1):
        labels = [s.label() for s in pure_strategies(d1)]
        assert labels == ["A,A", "A,F", "F,A", "F,F"]

    def test_mixed_action_helpers(self, d1):
        m = MixedAction.from_labels(d1, "A0", {"D": 1.0})
        assert m.is_pure and m.support() == (1,)
        assert not MixedAction.uniform(2, "A0").is_pure
        with pytest.raises(GameError):
            MixedAction("A1", [1.0])

    def test_strategy_helpers(self, d1):
        s = Strategy.constant(d1, {"A": 0.2, "F": 0.8}, name="fight80")
        assert not s.is_pure and s.label() == "fight80"
        assert s.support_labels() == [("c", "A"), ("c", "F"), ("d", "A"), ("d", "F")]
        with pytest.raises(GameError):
            Strategy.pure(d1, {"c": "A"})
        with pytest.raises(GameError):
            s.check_game(canonical("T1"))


def _loop_payoff(game, i, a0, rows, a2):
    """Expected payoff by explicit summation over all outcomes."""
    total = 0.0
    for x, y, a, b in itertools.product(range(len(game.A0)), range(len(game.Y0)),
                                        range(len(game.A1)), range(len(game.A2))):
        prob = a0[x] * game.rho0[y, x] * rows[y, a] * a2[b]
        if i == 0:
            total += prob * game.u0[x, a]
        else:
            total += prob * (game.u1 if i == 1 else game.u2)[y, a, b]
    return total


@st.composite
def game_and_profile(draw):
    n0, n1, n2, ny = (draw(st.integers(1, 3)) for _ in range(4))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    game = StageGame(
        A0=tuple(f"x{i}" for i in range(n0)), A1=tuple(f"a{i}" for i in range(n1)),
        A2=tuple(f"b{i}" for i in range(n2)), Y0=tuple(f"y{i}" for i in range(ny)),
        Y1=tuple(f"z{i}" for i in range(n1)),
        rho0=rng.dirichlet(np.ones(ny), size=n0).T,
        rho1=np.transpose(rng.dirichlet(np.ones(n1), size=(n1, n2)), (2, 0, 1)),
        u0=rng.normal(size=(n0, n1)), u1=rng.normal(size=(ny, n1, n2)), u2=rng.normal(size=(ny, n1, n2)),
    )
    a0 = rng.dirichlet(np.ones(n0))
    rows = rng.dirichlet(np.ones(n1), size=ny)
    a2 = rng.dirichlet(np.ones(n2))
    return game, a0, rows, a2


class TestProperties:
    @given(game_and_profile())
    def test_expected_payoff_matches_summation(self, gp):
        game, a0, rows, a2 = gp
        for i in range(3):
            assert expected_payoff(game, i, a0, rows, a2) == pytest.approx(_loop_payoff(game, i, a0, rows, a2),
                                                                           abs=1e-12)

    @given(game_and_profile())
    def test_payoff_tables_are_bilinear(self, gp):
        game, a0, rows, a2 = gp
        U0, U1, U2 = payoff_tables(game, rows)
        assert a0 @ U0 == pytest.approx(expected_payoff(game, 0, a0, rows, a2), abs=1e-12)
        assert a0 @ U1 @ a2 == pytest.approx(expected_payoff(game, 1, a0, rows, a2), abs=1e-12)
        assert a0 @ U2 @ a2 == pytest.approx(expected_payoff(game, 2, a0, rows, a2), abs=1e-12)

    @given(game_and_profile())
    def test_signal_distributions_are_probabilities(self, gp):
        game, a0, rows, a2 = gp
        p = signal_distribution(game, a0, rows, a2)
        assert p.min() >= 0 and p.sum() == pytest.approx(1.0, abs=1e-12)
        P = signal_table(game, rows)
        np.testing.assert_allclose(np.einsum("a,b,aby->y", a0, a2, P), p, atol=1e-12)
        gamma = induced_coupling(game, a0, rows)
        np.testing.assert_allclose(gamma.row_marginal, signal_marginal(game, a0), atol=1e-12)
        np.testing.assert_allclose(gamma.col_marginal, action_marginal(game, a0, rows), atol=1e-12)


class TestApplicationBuilders:
    U1 = {"low": {"lo": 1.0, "hi": 0.5}, "high": {"lo": 0.0, "hi": 1.0}}
    U2 = {"low": {"lo": 1.0, "hi": 0.0}, "high": {"lo": 0.0, "hi": 1.0}}

    def test_delegation_structure(self):
        g = build_delegation(0.1, self.U1, self.U2, {"low": 0.5, "high": 0.5})
        assert g.A2 == ("S", "D") and g.Y1 == ("lo", "hi", "-")
        assert validate_game(g).ok
        # safe option scales payoffs by eps
        np.testing.assert_allclose(g.u1[:, :, 0], 0.1 * g.u1[:, :, 1])
        np.testing.assert_allclose(g.rho1[:, 0, 0], [0.1, 0.0, 0.9])
        np.testing.assert_allclose(g.rho1[:, 0, 1], [0.9, 0.0, 0.1])

    def test_delegation_eps_range(self):
        with pytest.raises(GameError):
            build_delegation(0.0, self.U1, self.U2, {"low": 0.5, "high": 0.5})

    def test_communication_payoffs(self):
        g = build_communication({"I": 0.7, "G": 0.3}, ["A", "C"], {"A": 0.0, "C": 1.0},
                                {"I": {"A": 1.0, "C": 0.0}, "G": {"A": 0.0, "C": 1.0}},
                                {"A": {"I": 0.0, "G": 0.0}, "C": {"I": 1.0, "G": 0.0}}, 0.1)
        assert len(g.A2) == 4
        k = g.index("A2", "A>A|C>C")
        # recommending C when innocent: 0.9 * v(C) - 0.1 * 1
        assert g.u1[g.index("Y0", "I"), g.index("A1", "C"), k] == pytest.approx(0.8)
        assert g.u2[g.index("Y0", "G"), g.index("A1", "C"), k] == 1.0
        assert validate_game(g).ok
