"""Monte Carlo estimates of the discounted utility of consumption.

Wealth is simulated in log space under a fixed proportional policy. Regime
switches happen at their exact exponential times: a time step that contains a
switch is split there. Within a regime, log-wealth is Gaussian between loss
arrivals, and each loss multiplies wealth by ``1 - eta*l + (eta*l - nu)^+``.

Random streams are keyed by ``(master_seed, 0, block)`` for batch estimates and
``(master_seed, 1, path_index)`` for single paths, so results do not depend on
how blocks are spread across workers.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from numpy.typing import NDArray
from scipy.special import gamma as gamma_function
from scipy.special import gammaincc

from .chain import philox_stream
from .errors import InvalidParameter, NonpositiveWealth, UnboundedTail
from .insurance import retention_moments
from .market import REGIME_SQRT, MarketModel, UtilitySpec
from .policy import PolicyBundle, ValueFunction, policy_bundle


@dataclass(frozen=True)
class SimulationConfig:
    """Monte Carlo settings.

    ``paths`` counts simulated paths including antithetic partners, so it
    must be even when ``antithetic`` is set. Blocks of ``block_size`` paths
    are the unit of work handed to the ``workers``.
    """

    paths: int = 100_000
    horizon: float = 200.0
    dt: float = 1.0 / 500.0
    master_seed: int = 0
    antithetic: bool = True
    block_size: int = 5_000
    workers: int = 1

    def __post_init__(self):
        if self.paths < 1:
            raise InvalidParameter("paths", self.paths, "need at least one path")
        if self.antithetic and self.paths % 2:
            raise InvalidParameter("paths", self.paths, "antithetic pairs need an even count")
        if not self.dt > 0:
            raise InvalidParameter("dt", self.dt, "must be positive")
        if not self.horizon > 0:
            raise InvalidParameter("horizon", self.horizon, "must be positive")
        if self.block_size < 1 or self.workers < 1:
            raise InvalidParameter(
                "block_size/workers", (self.block_size, self.workers), "must be positive"
            )

    @property
    def steps(self) -> int:
        return max(1, int(np.ceil(self.horizon / self.dt - 1e-9)))

    @property
    def draws(self) -> int:
        """Independent samples: antithetic pairs count once."""
        return self.paths // 2 if self.antithetic else self.paths


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    paths_used: int
    truncation_bound: float
    horizon: float
    dt: float


def log_drifts(model: MarketModel, bundle: PolicyBundle) -> NDArray[np.float64]:
    """Per-regime drift of ``ln X`` between losses."""
    pi = np.asarray(bundle.pi_star)
    return (
        model.r
        + (model.mu - model.r) * pi
        - np.asarray(bundle.kappa)
        - np.asarray(bundle.premium)
        - 0.5 * model.sigma**2 * pi**2
    )


def _discounted_utility(utility, log_consumption, regimes, t, delta):
    if utility.is_log:
        level = log_consumption
    elif utility.kind == REGIME_SQRT:
        level = np.asarray(utility.beta)[regimes] * np.exp(0.5 * log_consumption)
    else:
        level = np.exp(utility.alpha * log_consumption)
        if utility.alpha < 0:
            level = -level
    return np.exp(-delta * t) * level


class _PathBlock:
    """State of ``n`` paths (times two with antithetic partners) advanced in lockstep."""

    def __init__(self, model, bundle, x0, i0, rng, n, antithetic, first_path):
        self.model = model
        self.bundle = bundle
        self.rng = rng
        self.first_path = first_path
        self.signs = np.array([[1.0], [-1.0]]) if antithetic else np.array([[1.0]])
        self.log_x = np.full((len(self.signs), n), np.log(x0))
        self.regimes = np.full(n, i0, dtype=int)
        self.exit_rates = -np.diag(model.Q)
        self.next_switch = self._holding_times(np.arange(n), 0.0)

        self.drift = log_drifts(model, bundle)
        self.vol = model.sigma * np.asarray(bundle.pi_star)
        self.log_kappa = np.log(np.asarray(bundle.kappa))
        self.insured = np.asarray(bundle.insured)
        self.nu = np.asarray(bundle.nu)
        self.occupancy = np.zeros(model.size)
        self.loss_counts = np.zeros(model.size, dtype=int)

    def _holding_times(self, idx, start):
        rates = self.exit_rates[self.regimes[idx]]
        draws = -np.log1p(-self.rng.random(len(idx)))
        with np.errstate(divide="ignore"):
            return start + np.where(rates > 0, draws / np.where(rates > 0, rates, 1.0), np.inf)

    def _switch(self, idx, at):
        rows = np.clip(self.model.Q[self.regimes[idx]], 0.0, None)
        rows[np.arange(len(idx)), self.regimes[idx]] = 0.0
        cumulative = np.cumsum(rows, axis=1)
        target = self.rng.random(len(idx)) * cumulative[:, -1]
        chosen = (cumulative <= target[:, None]).sum(axis=1)
        self.regimes[idx] = np.minimum(chosen, self.model.size - 1)
        self.next_switch[idx] = self._holding_times(idx, at)

    def _advance(self, idx, h, t):
        regimes = self.regimes[idx]
        z = self.rng.standard_normal(len(idx))
        self.log_x[:, idx] += (
            self.drift[regimes] * h + self.vol[regimes] * np.sqrt(h) * self.signs * z
        )

        counts = self.rng.poisson(self.model.lam[regimes] * h)
        size = self.model.size
        spans = np.broadcast_to(h, regimes.shape)
        self.occupancy += np.bincount(regimes, weights=spans, minlength=size)
        self.loss_counts += np.bincount(regimes, weights=counts, minlength=size).astype(int)
        if not counts.any():
            return
        owners = np.repeat(np.arange(len(idx)), counts)
        losses = self.model.loss.sample(self.rng, len(owners))
        owner_regimes = regimes[owners]
        hit = self.model.eta[owner_regimes] * losses
        covered = self.insured[owner_regimes]
        payout = np.where(covered, np.maximum(hit - self.nu[owner_regimes], 0.0), 0.0)
        factors = 1.0 - hit + payout
        if np.any(factors <= 0):
            bad = owners[int(np.argmax(factors <= 0))]
            raise NonpositiveWealth(self.first_path + int(idx[bad]), float(t))
        self.log_x[:, idx] += np.bincount(owners, weights=np.log(factors), minlength=len(idx))

    def step(self, t, end):
        """Advance every path from ``t`` to ``end``, splitting at regime switches."""
        idx = np.arange(self.regimes.size)
        start = np.full(idx.size, t)
        while idx.size:
            stop = np.minimum(self.next_switch[idx], end)
            self._advance(idx, stop - start, t)
            switched = self.next_switch[idx] <= end
            idx, start = idx[switched], stop[switched]
            if idx.size:
                self._switch(idx, start)

    def utility(self, utility, t, delta):
        log_consumption = self.log_x + self.log_kappa[self.regimes]
        return _discounted_utility(utility, log_consumption, self.regimes, t, delta)


def _simulate_block(model, bundle, x0, i0, rng, n, horizon, dt, antithetic, first_path=0):
    """Discounted utility integrals of ``n`` draws (antithetic pairs are averaged).

    Also returns the block so callers can read its loss and occupancy tallies.
    """
    steps = max(1, int(np.ceil(horizon / dt - 1e-9)))
    h = horizon / steps
    block = _PathBlock(model, bundle, x0, i0, rng, n, antithetic, first_path)

    previous = block.utility(bundle.utility, 0.0, model.delta)
    total = np.zeros_like(previous)
    for k in range(steps):
        t, end = k * h, (k + 1) * h
        block.step(t, end)
        current = block.utility(bundle.utility, end, model.delta)
        total += 0.5 * h * (previous + current)
        previous = current
    return total.mean(axis=0), block


def _check_start(model: MarketModel, x0: float, i0: int):
    if not x0 > 0:
        raise InvalidParameter("x0", x0, "initial wealth must be positive")
    if not 0 <= i0 < model.size:
        raise InvalidParameter("regime", i0, f"must index one of {model.size} regimes")


def simulate_wealth_path(
    model: MarketModel,
    bundle: PolicyBundle,
    x0: float,
    i0: int,
    config: SimulationConfig,
    path_index: int,
) -> float:
    """One sample of ``int_0^T e^(-delta t) U(kappa X_t) dt`` without an antithetic partner."""
    _check_start(model, x0, i0)
    rng = philox_stream(config.master_seed, 1, path_index)
    sample, _ = _simulate_block(
        model, bundle, x0, i0, rng, 1, config.horizon, config.dt, False, first_path=path_index
    )
    return float(sample[0])


def _run_block(model, bundle, x0, i0, config, block, n):
    rng = philox_stream(config.master_seed, 0, block)
    samples, _ = _simulate_block(
        model,
        bundle,
        x0,
        i0,
        rng,
        n,
        config.horizon,
        config.dt,
        config.antithetic,
        first_path=block * config.block_size,
    )
    return samples


def estimate_value(
    model: MarketModel,
    bundle: PolicyBundle,
    x0: float,
    i0: int,
    config: SimulationConfig,
) -> MCEstimate:
    """Sample mean and standard error of the discounted utility over ``config.paths``."""
    from . import logger

    _check_start(model, x0, i0)
    per_block = config.block_size // 2 if config.antithetic else config.block_size
    per_block = max(per_block, 1)
    sizes = [per_block] * (config.draws // per_block)
    if config.draws % per_block:
        sizes.append(config.draws % per_block)

    logger.info(
        "[regime-insurance] simulating %d paths in %d blocks (T=%g, dt=%g, workers=%d)",
        config.paths,
        len(sizes),
        config.horizon,
        config.dt,
        config.workers,
    )
    jobs = (
        delayed(_run_block)(model, bundle, x0, i0, config, block, n)
        for block, n in enumerate(sizes)
    )
    samples = np.concatenate(Parallel(n_jobs=config.workers)(jobs))

    std_error = float(samples.std(ddof=1) / np.sqrt(samples.size)) if samples.size > 1 else 0.0
    return MCEstimate(
        mean=float(samples.mean()),
        std_error=std_error,
        paths_used=config.paths,
        truncation_bound=truncation_bound(model, bundle.utility, x0, config.horizon, bundle),
        horizon=config.horizon,
        dt=config.dt,
    )


def truncation_bound(
    model: MarketModel,
    utility: UtilitySpec,
    x0: float,
    horizon: float,
    bundle: Optional[PolicyBundle] = None,
) -> float:
    """Bound on ``|E int_T^inf e^(-delta t) U(kappa X_t) dt|`` for the policy in ``bundle``.

    Power families bound ``E[X_t^alpha]`` by ``x0^alpha e^(rho t)`` with the
    largest per-regime growth rate ``rho``. Log utility bounds
    ``E|ln(kappa X_t)|`` by ``a + b t + c sqrt(t)``. Without ``bundle`` the
    optimal policy is solved for.
    """
    if bundle is None:
        from .solvers import solve

        bundle = policy_bundle(model, solve(model, utility))
    if not x0 > 0:
        raise InvalidParameter("x0", x0, "initial wealth must be positive")
    if horizon < 0:
        raise InvalidParameter("horizon", horizon, "must be nonnegative")

    delta = model.delta
    drift = log_drifts(model, bundle)
    vol = model.sigma * np.asarray(bundle.pi_star)
    kappa = np.asarray(bundle.kappa)
    moments = retention_moments(model, utility, constrained=bundle.constrained)

    if utility.is_log:
        a = np.max(np.abs(np.log(kappa))) + abs(np.log(x0))
        b = np.max(np.abs(drift) + model.lam * np.abs(moments))
        c = np.max(vol)
        tail = np.exp(-delta * horizon)
        return float(
            a * tail / delta
            + b * tail * (horizon / delta + 1.0 / delta**2)
            + c * gammaincc(1.5, delta * horizon) * gamma_function(1.5) / delta**1.5
        )

    alpha = utility.alpha
    growth = float(np.max(alpha * drift + 0.5 * alpha**2 * vol**2 + model.lam * (moments - 1.0)))
    if not delta > growth:
        raise UnboundedTail(growth, delta)
    weight = max(utility.beta) if utility.kind == REGIME_SQRT else 1.0
    scale = weight * np.max(kappa**alpha) * x0**alpha
    return float(scale * np.exp(-(delta - growth) * horizon) / (delta - growth))


def analytic_value(model: MarketModel, coeffs, x0: float, i0: int) -> float:
    """Closed-form value the estimates are compared against."""
    return float(ValueFunction(model, coeffs).value(x0, i0))


def loss_statistics(
    model: MarketModel,
    bundle: PolicyBundle,
    x0: float,
    i0: int,
    config: SimulationConfig,
    block: int = 0,
):
    """Loss arrivals and time spent per regime, pooled over the paths of one block."""
    _check_start(model, x0, i0)
    n = min(config.block_size, config.paths)
    rng = philox_stream(config.master_seed, 0, block)
    _, state = _simulate_block(
        model, bundle, x0, i0, rng, n, config.horizon, config.dt, False, block * config.block_size
    )
    return state.loss_counts, state.occupancy
