"""Acceptance criteria, one test each.

Every test appends a PASS or FAIL line to ``conftest.ACCEPTANCE_LINES``;
the lines are printed in the terminal summary.
"""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import (
    ACCEPTANCE_LINES,
    precedence_orderable,
    random_mechanism,
    random_support_strategy,
    supermodular_game,
)
from reptoolkit.cli import main
from reptoolkit.mechanism_order import (
    Mechanism,
    build_graph,
    exhaustive_orderable,
    find_cycle,
    find_forbidden_triple,
    is_cycle,
    is_forbidden_triple,
    orderable,
    verify_order,
)
from reptoolkit.reputation import (
    analyze,
    find_supermodular_orders,
    is_confound_defeating,
    is_monotone,
    is_supermodular,
    strict_cm_by_a2,
    supermodular_margin,
)
from reptoolkit.scenarios import builtin, parse_scenario
from reptoolkit.simulator import (
    ScenarioConfig,
    gossner_statistic,
    martingale_checks,
    payoff_vs_bounds,
    simulate,
    slack,
)
from reptoolkit.stage_game import StageGame
from reptoolkit.transport import OtInstance, Uniqueness, brute_force_ot, is_unique_solution, solve_ot

TOL = 1e-9

# Pilot runs of the built-in D1 and D3 scenarios (delta 0.99, T 2000, 500 runs, seed 42,
# adversarial ties; short-run players expect the rational type to play (A, A) while it
# actually plays (A, F)).  Frozen here; a change means the simulator's draws changed.
PILOT_MEAN = {"D1": 0.7939042347679963, "D3": 0.646738719872493}


@contextmanager
def criterion(number, title):
    """Record PASS when the block completes and FAIL (then re-raise) otherwise."""
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        ACCEPTANCE_LINES.append(f"criterion {number:>2} FAIL  {title}: {type(exc).__name__}: {exc}".splitlines()[0])
        print(ACCEPTANCE_LINES[-1])
        raise
    line = f"criterion {number:>2} PASS  {title}"
    if detail:
        line += "  (" + ", ".join(f"{k}={v}" for k, v in detail.items()) + ")"
    ACCEPTANCE_LINES.append(line)
    print(line)


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def write(tmp_path, name):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(builtin(name)), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def pilots():
    """The D1 and D3 built-in simulations, each timed."""
    out = {}
    for name in ("D1", "D3"):
        sc = parse_scenario(builtin(name))
        cfg = ScenarioConfig(sc.game, sc.types, sc.s1_star, **sc.simulate)
        start = time.perf_counter()
        rep = simulate(cfg)
        out[name] = (sc, cfg, rep, time.perf_counter() - start)
    return out


def test_criterion_01_deterrence_d1(capsys, tmp_path):
    with criterion(1, "D1 analyze: Stackelberg (A,F) 0.8, V0 0.2, minmax 0.44, confound-defeating, c>d A>F") as d:
        path = write(tmp_path, "D1")
        start = time.perf_counter()
        code, out = run_cli(capsys, "analyze", path)
        elapsed = time.perf_counter() - start
        report = json.loads(out)
        v = report["verdict"]
        pay = v["payoffs"]
        assert code == 0
        assert pay["stackelberg_pure"]["label"] == "A,F"
        assert pay["stackelberg_pure"]["strategy"] == {"c": {"A": 1, "F": 0}, "d": {"A": 0, "F": 1}}
        assert abs(pay["stackelberg_pure"]["value"] - 0.8) <= TOL
        assert abs(pay["V0"] - 0.2) <= TOL
        assert abs(pay["minmax"] - 0.44) <= TOL
        assert v["confound_defeating"]["verdict"] is True
        assert v["supermodular"] == {"order_y": ["c", "d"], "order_a": ["A", "F"]}
        assert elapsed < 1.0
        d["runtime_s"] = f"{elapsed:.3f}"


def test_criterion_02_deterrence_d2():
    with criterion(2, "D2: not confound-defeating, exchange cycle gain -0.2, v_mon_upper 0.68") as d:
        sc = parse_scenario(builtin("D2"))
        v = analyze(sc.game, sc.types, sc.s1_star)
        assert v.confound.verdict is Uniqueness.NON_UNIQUE
        cyc = v.confound.cycle
        assert cyc.is_admissible()
        # the certificate is checked against the cost directly, not against the solver
        assert abs(cyc.recompute_gain(sc.game.u1[:, :, 0]) + 0.2) <= TOL
        assert abs(cyc.gain + 0.2) <= TOL
        assert abs(v.bounds["v_mon_upper"] - 0.68) <= TOL
        d["cycle"] = cyc.as_dict()["pairs"]


def test_criterion_03_trust_t1():
    with criterion(3, "T1: theorem1 1.5, minmax 0, supermodular for both pure a2") as d:
        sc = parse_scenario(builtin("T1"))
        game = sc.game
        v = analyze(game, sc.types, sc.s1_star)
        assert abs(v.bounds["theorem1"] - 1.5) <= TOL
        assert abs(v.ledger.minmax) <= TOL
        orders = find_supermodular_orders(game)
        assert orders is not None
        for k, a2 in enumerate(game.A2):
            sliced = StageGame(game.A0, game.A1, (a2,), game.Y0, game.Y1, game.rho0, game.rho1[:, :, [k]],
                               game.u0, game.u1[:, :, [k]], game.u2[:, :, [k]])
            assert is_supermodular(sliced, orders)
            d[f"margin_{a2}"] = f"{supermodular_margin(sliced, orders):.3g}"


def test_criterion_04_salience_d3():
    with criterion(4, "D3: c0 = 0.833333, beta 0.4, theorem2 0.44") as d:
        sc = parse_scenario(builtin("D3"))
        v = analyze(sc.game, sc.types, sc.s1_star)
        p, g, l = 0.8, 1.0, 1.0
        formula = (p * g + (1 - p) * l) / ((2 * p - 1) * (1 + g))
        assert abs(v.c0.value - formula) <= 1e-6
        assert abs(v.salience_beta - 0.4) <= TOL
        assert abs(v.bounds["theorem2"] - 0.44) <= TOL
        d["c0"] = f"{v.c0.value:.9f}"


def test_criterion_05_ot_oracle():
    with criterion(5, "OT solver vs brute-force vertex enumeration") as d:
        rng = np.random.default_rng(20240501)
        start = time.perf_counter()
        n, marginal, disagree = 0, 0, 0
        for _ in range(500):
            m, k = (int(x) for x in rng.integers(1, 5, size=2))
            step = 10
            rho = rng.multinomial(step, np.ones(m) / m) / step
            phi = rng.multinomial(step, np.ones(k) / k) / step
            inst = OtInstance(rng.integers(0, 5, size=(m, k)) / 4, rho, phi)
            sol = solve_ot(inst)
            bf = brute_force_ot(inst)
            assert abs(sol.value - bf.value) <= TOL
            n += 1
            if sol.unique is Uniqueness.MARGINAL:
                # grid costs make near-zero gains exact ties, so a second optimum exists
                assert not bf.unique
                marginal += 1
            elif (sol.unique is Uniqueness.UNIQUE) != bf.unique:
                disagree += 1
        elapsed = time.perf_counter() - start
        assert disagree == 0
        assert elapsed < 60
        d.update(instances=n, marginal=marginal, runtime_s=f"{elapsed:.1f}")


def test_criterion_06_strict_cm_iff_unique():
    with criterion(6, "strictly CM support <=> unique optimal coupling") as d:
        rng = np.random.default_rng(7)
        n, marginal, disagree = 0, 0, 0
        while n < 500:
            m, k = (int(x) for x in rng.integers(2, 5, size=2))
            cost = rng.integers(0, 6, size=(m, k)) / 5
            if n % 2 == 0:
                # an optimal vertex of a random instance
                rho = rng.multinomial(10, np.ones(m) / m) / 10
                phi = rng.multinomial(10, np.ones(k) / k) / 10
                mass = brute_force_ot(OtInstance(cost, rho, phi)).optimal[0]
            else:
                # a random coupling with random support
                mass = rng.dirichlet(np.ones(m * k)).reshape(m, k) * (rng.random((m, k)) < 0.6)
                if mass.sum() == 0:
                    continue
                mass = mass / mass.sum()
            verdict, _ = is_unique_solution(mass, cost)
            bf = brute_force_ot(OtInstance(cost, mass.sum(axis=1), mass.sum(axis=0)))
            truth = bf.unique and np.allclose(bf.optimal[0], mass, atol=1e-9)
            n += 1
            if verdict is Uniqueness.MARGINAL:
                assert not truth
                marginal += 1
            elif (verdict is Uniqueness.UNIQUE) != truth:
                disagree += 1
        assert disagree == 0
        d.update(cases=n, marginal=marginal)


def test_criterion_07_monotone_cm_confound_defeating():
    with criterion(7, "supermodular games: monotone <=> strictly CM <=> confound-defeating") as d:
        rng = np.random.default_rng(11)
        n, marginal, disagree, monotone = 0, 0, 0, 0
        while n < 250:
            ny, na, n2 = int(rng.integers(2, 4)), int(rng.integers(2, 4)), int(rng.integers(1, 3))
            game = supermodular_game(rng, ny, na, n2)
            orders = find_supermodular_orders(game)
            assert orders is not None
            s = random_support_strategy(rng, game)
            mono = is_monotone(s, orders)[0]
            cm = [v for v, _, _ in strict_cm_by_a2(game, s).values()]
            cd = is_confound_defeating(game, s, "conservative").verdict
            n += 1
            if Uniqueness.MARGINAL in cm or cd is Uniqueness.MARGINAL:
                marginal += 1
                continue
            monotone += mono
            all_cm = all(v is Uniqueness.UNIQUE for v in cm)
            if not (mono == all_cm == (cd is Uniqueness.UNIQUE)):
                disagree += 1
        assert disagree == 0
        d.update(games=n, marginal=marginal, monotone=monotone)


def test_criterion_08_orderability():
    with criterion(8, "orderability: hub-and-singletons triple, bi-pooling 4-cycle, random mechanisms vs search") as d:
        hub = Mechanism.from_support(("t1", "t2", "t3", "t4"), ("r1", "r2", "r3"),
                                     {"t1": ["r1"], "t2": ["r2"], "t3": ["r3"], "t4": ["r1", "r2", "r3"]})
        cert = orderable(hub)
        assert cert.triple is not None and cert.triple["type"] == 1
        assert is_forbidden_triple(build_graph(hub), find_forbidden_triple(build_graph(hub)))
        m2 = parse_scenario(builtin("M2")).mechanism
        cert = orderable(m2)
        assert cert.cycle == [("0", "1/3"), ("1", "1/3"), ("1", "2/3"), ("0", "2/3")]
        rng = np.random.default_rng(3)
        n, disagree, yes = 0, 0, 0
        for _ in range(400):
            ns, nr = (int(x) for x in rng.integers(1, 6, size=2))
            mech = random_mechanism(rng, ns, nr, float(rng.uniform(0.15, 0.7)))
            cert = orderable(mech)
            if math.factorial(ns) * math.factorial(nr) <= 5040:
                truth = exhaustive_orderable(mech)
            else:
                truth = precedence_orderable(mech)
            n += 1
            yes += truth
            if cert.orderable != truth:
                disagree += 1
            elif cert.orderable:
                assert verify_order(mech, cert.orders)
            elif cert.cycle is not None:
                assert is_cycle(build_graph(mech), find_cycle(build_graph(mech)))
        assert disagree == 0
        d.update(mechanisms=n, orderable=yes)


def test_criterion_09_gossner_bound(pilots):
    with criterion(9, "D1 simulation: bad periods within the entropy bound, submartingale passes") as d:
        sc, cfg, rep, elapsed = pilots["D1"]
        assert (cfg.horizon, cfg.runs, cfg.seed) == (2000, 500, 42)
        assert float(sc.types.prior[1]) == 0.1
        g = gossner_statistic(rep, 0.1)
        assert abs(g.bound - 460.517) <= 1e-3
        assert g.mean <= g.bound + 3 * g.se
        assert martingale_checks(rep).submartingale_pass
        assert elapsed < 120
        d.update(mean_bad=f"{g.mean:.3f}", se=f"{g.se:.3f}", runtime_s=f"{elapsed:.1f}")


def test_criterion_10_payoff_bounds(pilots):
    with criterion(10, "deviation payoffs: D1 >= 0.8 - slack, D3 >= 0.44 - slack (myopic protocol)") as d:
        for name, key, bound in (("D1", "theorem1", 0.8), ("D3", "theorem2", 0.44)):
            sc, cfg, rep, _ = pilots[name]
            assert rep.mean_payoff == pytest.approx(PILOT_MEAN[name], abs=TOL)
            bounds = analyze(sc.game, sc.types, sc.s1_star).bounds
            assert abs(bounds[key] - bound) <= TOL
            row = next(r for r in payoff_vs_bounds(rep, bounds) if r["bound_name"] == key)
            assert row["pass"]
            # the smallest eta makes the slack nearly vacuous; the largest eta is a sharper check
            tight = ScenarioConfig(cfg.game, cfg.types, cfg.s1_star, delta=cfg.delta, horizon=cfg.horizon,
                                   eta_grid=(max(cfg.eta_grid),))
            assert rep.mean_payoff >= bound - slack(tight)
            d[name] = f"{rep.mean_payoff:.4f}>={bound}-{row['slack']:.3f} (eta 0.5: {bound - slack(tight):.3f})"


def test_criterion_11_reproducibility(capsys, tmp_path):
    with criterion(11, "identical scenario and seed give byte-identical reports") as d:
        path = write(tmp_path, "D3")
        outs = []
        for k in range(2):
            target = tmp_path / f"report{k}.json"
            code, _ = run_cli(capsys, "simulate", path, "--runs", "100", "--out", str(target))
            assert code == 0
            outs.append(target.read_bytes())
        assert outs[0] == outs[1]
        a = run_cli(capsys, "analyze", write(tmp_path, "prosecutor"))[1]
        b = run_cli(capsys, "analyze", write(tmp_path, "prosecutor"))[1]
        assert a == b
        d["bytes"] = len(outs[0])
