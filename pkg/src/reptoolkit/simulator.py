"""Seeded Monte Carlo simulation of reputation dynamics.

The long-run player is rational and deviates to the commitment strategy
``s1*`` (or another fixed policy).  Short-run players best respond each
period to the posterior-weighted average of the strategies they expect:
a conjectured strategy for the rational type and the commitment types'
own strategies.  Beliefs are updated by Bayes' rule from the public
signal only.

All runs of a chunk are advanced together with numpy; every run draws its
uniforms from its own PCG64 stream keyed by ``(seed, run index)``, so
results do not depend on chunking or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from reptoolkit.errors import GameError, SimulationError
from reptoolkit.reputation import TypeSpace
from reptoolkit.stage_game import StageGame, Strategy, payoff_tables, require_valid
from reptoolkit.tolerances import get_tolerances

TIE_BREAKS = ("adversarial", "favorable", "first_label", "uniform")
CHUNK = 64
CHECKPOINTS = (0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000)


class InsufficientRunsError(SimulationError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    game: StageGame
    types: TypeSpace
    s1_star: int
    delta: float = 0.99
    horizon: int = 2000
    runs: int = 500
    seed: int = 0
    rational_conjecture: Strategy | None = None  # None: the rational type is expected to play s1*
    true_rational_policy: Strategy | None = None  # None: the rational type plays s1*
    tie_break: str = "adversarial"
    eta_grid: tuple[float, ...] = (0.1,)

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise GameError(f"delta must lie in (0, 1), got {self.delta}")
        if self.horizon < 1 or self.runs < 1:
            raise GameError("horizon and runs must be positive")
        if not 0 <= self.s1_star < len(self.types.types):
            raise GameError("s1_star index out of range")
        if self.tie_break not in TIE_BREAKS:
            raise GameError(f"tie_break must be one of {TIE_BREAKS}")
        if not self.eta_grid or any(not 0 < e <= 1 for e in self.eta_grid):
            raise GameError("eta_grid must be a non-empty list of values in (0, 1]")
        if not 0 <= self.seed < 2 ** 64:
            raise GameError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "eta_grid", tuple(float(e) for e in self.eta_grid))
        for s in (self.rational_conjecture, self.true_rational_policy, *self.types.types):
            if s is not None:
                s.check_game(self.game)

    @property
    def star(self) -> Strategy:
        return self.types.types[self.s1_star]

    @property
    def conjecture(self) -> Strategy:
        return self.rational_conjecture if self.rational_conjecture is not None else self.star

    @property
    def policy(self) -> Strategy:
        return self.true_rational_policy if self.true_rational_policy is not None else self.star


@dataclass
class SimReport:
    config: ScenarioConfig
    alpha0: np.ndarray  # (runs, T, |A0|)
    alpha2: np.ndarray  # (runs, T, |A2|)
    y1: np.ndarray  # (runs, T)
    posterior: np.ndarray  # (runs, T + 1, 1 + K), rational first
    p_pred: np.ndarray  # (runs, T, |Y1|) under the posterior
    p_star: np.ndarray  # (runs, T, |Y1|) under s1*
    stage_payoff: np.ndarray  # (runs, T)
    discounted: np.ndarray  # (runs,)
    predictive_residual: float
    notes: list = field(default_factory=list)

    @property
    def mean_payoff(self) -> float:
        return float(self.discounted.mean())

    @property
    def se_payoff(self) -> float:
        n = self.discounted.size
        return float(self.discounted.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def _thread_cap() -> int:
    raw = os.environ.get("REPTOOLKIT_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise GameError(f"REPTOOLKIT_THREADS must be an integer, got {raw!r}") from None


def run_uniforms(seed: int, run: int, horizon: int) -> np.ndarray:
    """The (T, 5) uniforms of one run.

    Columns drive player 0's action, the private signal, player 1's action,
    player 2's action and the public signal, in that order.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run,))))
    return rng.random((horizon, 5))


def _uniform_block(seed: int, runs: range, horizon: int) -> np.ndarray:
    return np.stack([run_uniforms(seed, r, horizon) for r in runs])


def _draw(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw for each row of ``probs`` (shape (R, n)) from uniforms ``u`` (R,)."""
    cdf = np.cumsum(probs, axis=1)
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


class _Model:
    """Precomputed tables shared by all chunks."""

    def __init__(self, cfg: ScenarioConfig):
        g = cfg.game
        self.cfg = cfg
        strategies = [cfg.conjecture, *cfg.types.types]
        tabs = [payoff_tables(g, s) for s in strategies]
        self.U0 = np.array([t[0] for t in tabs])  # (K1, A0)
        self.U2 = np.array([t[2] for t in tabs])  # (K1, A0, A2)
        self.U1_star = payoff_tables(g, cfg.star)[1]  # (A0, A2)
        self.Phi = np.array([g.rho0.T @ s.rows for s in strategies])  # (K1, A0, A1)
        self.star_k = 1 + cfg.s1_star
        self.policy = cfg.policy.rows
        self.tie = get_tolerances().tie


def _responses(m: _Model, mu: np.ndarray):
    """Short-run mixtures (alpha0, alpha2) for each run given posteriors ``mu``."""
    R = mu.shape[0]
    n0, n2 = m.U0.shape[1], m.U2.shape[2]
    v0 = mu @ m.U0
    m0 = v0 >= v0.max(axis=1, keepdims=True) - m.tie
    v2 = np.einsum("rk,kab->rab", mu, m.U2)
    m2 = v2 >= v2.max(axis=2, keepdims=True) - m.tie
    mode = m.cfg.tie_break
    if mode == "uniform":
        alpha0 = m0 / m0.sum(axis=1, keepdims=True)
        v2m = np.einsum("ra,rab->rb", alpha0, v2)
        mm = v2m >= v2m.max(axis=1, keepdims=True) - m.tie
        return alpha0, mm / mm.sum(axis=1, keepdims=True)
    ok = m0[:, :, None] & m2
    if mode == "first_label":
        a0 = m0.argmax(axis=1)
        a2 = m2[np.arange(R), a0].argmax(axis=1)
    else:
        sign = 1.0 if mode == "adversarial" else -1.0
        score = np.where(ok, sign * m.U1_star[None], np.inf).reshape(R, -1)
        flat = score.argmin(axis=1)
        a0, a2 = np.divmod(flat, n2)
    alpha0 = np.zeros((R, n0))
    alpha0[np.arange(R), a0] = 1.0
    alpha2 = np.zeros((R, n2))
    alpha2[np.arange(R), a2] = 1.0
    return alpha0, alpha2


def _simulate_chunk(m: _Model, runs: range):
    cfg, g = m.cfg, m.cfg.game
    R, T = len(runs), cfg.horizon
    U = _uniform_block(cfg.seed, runs, T)
    K1 = m.U0.shape[0]
    mu = np.tile(cfg.types.prior, (R, 1))
    post = np.empty((R, T + 1, K1))
    post[:, 0] = mu
    A0 = np.empty((R, T, len(g.A0)))
    A2 = np.empty((R, T, len(g.A2)))
    Y1 = np.empty((R, T), dtype=np.int64)
    PP = np.empty((R, T, len(g.Y1)))
    PS = np.empty((R, T, len(g.Y1)))
    pay = np.empty((R, T))
    resid = 0.0
    rr = np.arange(R)
    for t in range(T):
        alpha0, alpha2 = _responses(m, mu)
        a0 = _draw(alpha0, U[:, t, 0])
        y0 = _draw(g.rho0[:, a0].T, U[:, t, 1])
        a1 = _draw(m.policy[y0], U[:, t, 2])
        a2 = _draw(alpha2, U[:, t, 3])
        y1 = _draw(g.rho1[:, a1, a2].T, U[:, t, 4])
        phi = np.einsum("ra,kab->rkb", alpha0, m.Phi)
        M = np.einsum("rc,ybc->ryb", alpha2, g.rho1)
        pk = np.einsum("rkb,ryb->rky", phi, M)
        p_pred = np.einsum("rk,rky->ry", mu, pk)
        like = pk[rr, :, y1]
        new = mu * like
        total = new.sum(axis=1)
        if np.any(total <= 0):
            bad = int(runs[int(np.flatnonzero(total <= 0)[0])])
            raise SimulationError(
                f"run {bad}, period {t}: observed signal has zero probability under every type with positive belief"
            )
        new /= total[:, None]
        # one-step predictive identity: sum_y P(y) mu(.|y) = mu
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(p_pred[:, None, :] > 0, mu[:, :, None] * pk / p_pred[:, None, :], 0.0)
        resid = max(resid, float(np.abs(np.einsum("ry,rky->rk", p_pred, cond) - mu).max()))
        A0[:, t], A2[:, t], Y1[:, t] = alpha0, alpha2, y1
        PP[:, t], PS[:, t] = p_pred, pk[:, m.star_k]
        pay[:, t] = g.u1[y0, a1, a2]
        mu = new
        post[:, t + 1] = mu
    return A0, A2, Y1, post, PP, PS, pay, resid


def simulate(cfg: ScenarioConfig) -> SimReport:
    """Simulate ``cfg.runs`` independent histories of length ``cfg.horizon``."""
    require_valid(cfg.game)
    m = _Model(cfg)
    chunks = [range(s, min(s + CHUNK, cfg.runs)) for s in range(0, cfg.runs, CHUNK)]
    workers = min(_thread_cap(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda c: _simulate_chunk(m, c), chunks))
    else:
        parts = [_simulate_chunk(m, c) for c in chunks]
    A0, A2, Y1, post, PP, PS, pay = (np.concatenate([p[i] for p in parts]) for i in range(7))
    resid = max(p[7] for p in parts)
    T, d = cfg.horizon, cfg.delta
    w = d ** np.arange(T) * (1 - d) / (1 - d ** T)
    # row-wise sums keep each run's value independent of how many runs there are
    discounted = (pay * w).sum(axis=1)
    return SimReport(cfg, A0, A2, Y1, post, PP, PS, pay, discounted, resid)


def sample_signals(game: StageGame, alpha0, s1: Strategy, alpha2, n: int, seed: int) -> np.ndarray:
    """Empirical public-signal frequencies over ``n`` independent stage plays.

    Uses the simulator's per-run streams and samplers with fixed short-run
    mixtures and no belief updating.
    """
    a0w = np.tile(np.asarray(getattr(alpha0, "weights", alpha0), dtype=float), (n, 1))
    a2w = np.tile(np.asarray(getattr(alpha2, "weights", alpha2), dtype=float), (n, 1))
    U = _uniform_block(seed, range(n), 1)[:, 0]
    a0 = _draw(a0w, U[:, 0])
    y0 = _draw(game.rho0[:, a0].T, U[:, 1])
    a1 = _draw(s1.rows[y0], U[:, 2])
    a2 = _draw(a2w, U[:, 3])
    y1 = _draw(game.rho1[:, a1, a2].T, U[:, 4])
    return np.bincount(y1, minlength=len(game.Y1)) / n


# diagnostics


@dataclass(frozen=True)
class GossnerStat:
    eta: float
    mean: float
    se: float
    bound: float

    @property
    def passes(self) -> bool:
        return self.mean <= self.bound + 3 * self.se + 1e-12

    def as_dict(self) -> dict:
        return {"eta": self.eta, "mean_bad_periods": self.mean, "se": self.se,
                "bound": self.bound, "pass": self.passes}


def gossner_bound(mu0: float, eta: float) -> float:
    """Upper bound on the expected number of periods with prediction error above ``eta``."""
    return -2.0 * math.log(mu0) / eta ** 2 if mu0 < 1 else 0.0


def gossner_statistic(report: SimReport, eta: float) -> GossnerStat:
    """Mean count of periods where posterior predictions miss s1*'s signals by more than ``eta``."""
    if eta not in report.config.eta_grid:
        raise GameError(f"eta {eta} is not in the scenario's eta_grid {report.config.eta_grid}")
    gap = np.abs(report.p_pred - report.p_star).max(axis=2)
    counts = (gap > eta).sum(axis=1).astype(float)
    n = counts.size
    se = float(counts.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    mu0 = float(report.config.types.prior[1 + report.config.s1_star])
    return GossnerStat(eta, float(counts.mean()), se, gossner_bound(mu0, eta))


@dataclass(frozen=True)
class MartingaleDiagnostics:
    submartingale_pass: bool
    worst_z: float
    failing_periods: tuple[int, ...]
    predictive_residual: float

    @property
    def residual_pass(self) -> bool:
        return self.predictive_residual <= 1e-9

    def as_dict(self) -> dict:
        return {
            "submartingale_pass": self.submartingale_pass,
            "worst_z": self.worst_z,
            "failing_periods": list(self.failing_periods),
            "predictive_residual": self.predictive_residual,
            "predictive_residual_pass": self.residual_pass,
        }


def martingale_checks(report: SimReport, min_runs: int = 100) -> MartingaleDiagnostics:
    """Submartingale test for the belief on s1*, and the one-step predictive identity.

    (i) For each period, the mean increment of the posterior on s1* across
    runs must be at least -3 standard errors.  (ii) Averaging the one-step
    posterior over the predicted signal distribution must return the
    current posterior; the largest deviation is recorded during simulation.
    """
    runs = report.config.runs
    if runs < min_runs:
        raise InsufficientRunsError(f"martingale checks need at least {min_runs} runs, got {runs}")
    k = 1 + report.config.s1_star
    d = np.diff(report.posterior[:, :, k], axis=1)
    mean = d.mean(axis=0)
    se = d.std(axis=0, ddof=1) / math.sqrt(runs)
    fail = mean < -3 * se - 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(np.abs(mean) <= 1e-12, 0.0, np.where(se > 0, mean / se, np.where(mean < 0, -np.inf, 0.0)))
    return MartingaleDiagnostics(
        submartingale_pass=not bool(fail.any()),
        worst_z=float(z.min()) if z.size else 0.0,
        failing_periods=tuple(int(t) for t in np.flatnonzero(fail)),
        predictive_residual=report.predictive_residual,
    )


def slack(cfg: ScenarioConfig) -> float:
    """Finite-horizon allowance for comparing simulated payoffs with limit bounds."""
    g = cfg.game
    span = g.u1_max - g.u1_min
    mu0 = float(cfg.types.prior[1 + cfg.s1_star])
    T0 = math.ceil(gossner_bound(mu0, min(cfg.eta_grid)))
    return (1 - cfg.delta ** T0) * span + cfg.delta ** cfg.horizon * span


def payoff_vs_bounds(report: SimReport, bounds: dict) -> list[dict]:
    """Compare the mean discounted payoff with each defined bound.

    A row passes when ``mean >= bound - slack``.  The bounds are limit
    statements as the discount factor goes to one, so a failure at a low
    discount factor is reported but carries no claim.
    """
    s = slack(report.config)
    rows = []
    for key in ("fl92", "theorem1", "theorem2"):
        b = bounds.get(key)
        if b is None:
            continue
        rows.append({
            "bound_name": key,
            "bound": float(b),
            "mean_payoff": report.mean_payoff,
            "se": report.se_payoff,
            "slack": s,
            "pass": report.mean_payoff >= b - s,
            "protocol": "myopic short-run best responses to the posterior-average strategy",
        })
    return rows


def summarize(report: SimReport, bounds: dict | None = None) -> dict:
    """JSON-ready summary of a simulation."""
    cfg = report.config
    k = 1 + cfg.s1_star
    mean_path = report.posterior[:, :, k].mean(axis=0)
    out = {
        "protocol": {
            "short_run": "myopic best responses to the posterior-average strategy",
            "rational_conjecture": "plays_s1_star" if cfg.rational_conjecture is None else cfg.rational_conjecture.as_dict(),
            "true_rational_policy": "always_s1_star" if cfg.true_rational_policy is None else cfg.true_rational_policy.as_dict(),
            "tie_break": cfg.tie_break,
            "delta": cfg.delta,
            "horizon": cfg.horizon,
            "runs": cfg.runs,
            "seed": cfg.seed,
            "eta_grid": list(cfg.eta_grid),
        },
        "mean_discounted_payoff": report.mean_payoff,
        "se_discounted_payoff": report.se_payoff,
        "mean_posterior_s1_star": {str(t): float(mean_path[t]) for t in CHECKPOINTS if t <= cfg.horizon},
        "mean_alpha0": {a: float(v) for a, v in zip(cfg.game.A0, report.alpha0.mean(axis=(0, 1)))},
        "mean_alpha2": {a: float(v) for a, v in zip(cfg.game.A2, report.alpha2.mean(axis=(0, 1)))},
        "gossner": [gossner_statistic(report, e).as_dict() for e in cfg.eta_grid],
        "slack": slack(cfg),
    }
    if cfg.runs >= 100:
        out["martingale"] = martingale_checks(report).as_dict()
    else:
        out["martingale"] = None
    if bounds is not None:
        out["bounds"] = payoff_vs_bounds(report, bounds)
    return out
