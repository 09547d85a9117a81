"""Continuous-time Markov chains that drive the market regimes."""

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.sparse.csgraph import connected_components

from .errors import InvalidGenerator, InvalidParameter, SingularChain

ROW_SUM_TOL = 1e-12


def philox_stream(seed: int, *spawn_key: int) -> np.random.Generator:
    """Return a counter-based stream identified by ``(seed, *spawn_key)``.

    Streams with different keys are independent, which lets paths (or
    blocks of paths) be generated in any order and still reproduce.
    """
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(spawn_key))
    return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Validated transition-rate matrix ``Q``; build it with :func:`validate_generator`."""

    rates: NDArray[np.float64]

    @classmethod
    def two_regime(cls, pi_1: float, pi_2: float) -> "GeneratorMatrix":
        """Two-state chain leaving regime 0 at rate ``pi_1`` and regime 1 at rate ``pi_2``."""
        return validate_generator([[-pi_1, pi_1], [pi_2, -pi_2]])

    @property
    def size(self) -> int:
        return self.rates.shape[0]

    def exit_rate(self, regime: int) -> float:
        return float(-self.rates[regime, regime])

    @property
    def irreducible(self) -> bool:
        if self.size == 1:
            return True
        n_components, _ = connected_components(self.rates > 0, directed=True, connection="strong")
        return n_components == 1

    def to_list(self):
        return self.rates.tolist()

    def __eq__(self, other):
        if not isinstance(other, GeneratorMatrix):
            return NotImplemented
        return np.array_equal(self.rates, other.rates)

    def __hash__(self):
        return hash(self.rates.tobytes())


def validate_generator(rates: ArrayLike) -> GeneratorMatrix:
    """Check ``rates`` is a generator matrix and freeze it.

    Rows must sum to zero within ``1e-12``, off-diagonal rates must be
    nonnegative and all entries finite. Reducible chains are accepted here;
    :func:`stationary_distribution` is where irreducibility matters.
    """
    matrix = np.array(rates, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
        raise InvalidGenerator(None, f"expected a nonempty square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        row = int(np.argwhere(~np.isfinite(matrix))[0, 0])
        raise InvalidGenerator(row, "entries must be finite")

    for row, values in enumerate(matrix):
        off_diagonal = np.delete(values, row)
        if np.any(off_diagonal < 0):
            raise InvalidGenerator(row, "off-diagonal rates must be nonnegative")
        if values[row] > 0:
            raise InvalidGenerator(row, "diagonal rate must be nonpositive")
        total = values.sum()
        if abs(total) > ROW_SUM_TOL:
            raise InvalidGenerator(row, f"row sums to {total:.3g}, not 0")

    matrix.setflags(write=False)
    return GeneratorMatrix(matrix)


@dataclass(frozen=True)
class RegimePath:
    """A realisation of the chain on ``[0, horizon]``.

    ``entry_times[k]`` is the time the chain entered ``regimes[k]``; the
    first entry is always at ``t=0`` and consecutive regimes differ.
    """

    entry_times: Tuple[float, ...]
    regimes: Tuple[int, ...]
    horizon: float
    seed: int
    path_index: int = 0
    _times: NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_times", np.asarray(self.entry_times, dtype=float))

    def regime_at(self, t: float) -> int:
        return self.regimes[int(np.searchsorted(self._times, t, side="right")) - 1]

    def segments(self) -> Tuple[Tuple[float, float, int], ...]:
        """``(start, end, regime)`` triples covering ``[0, horizon]``."""
        ends = (*self.entry_times[1:], self.horizon)
        return tuple(zip(self.entry_times, ends, self.regimes))

    def holding_times(self) -> Tuple[Tuple[int, float], ...]:
        """Completed ``(regime, duration)`` visits; the censored last visit is dropped."""
        return tuple(
            (regime, end - start) for start, end, regime in self.segments()[:-1]
        )

    def occupancy(self, size: int) -> NDArray[np.float64]:
        """Time spent in each of ``size`` regimes up to the horizon."""
        spent = np.zeros(size)
        for start, end, regime in self.segments():
            spent[regime] += end - start
        return spent


def sample_regime_path(
    gen: GeneratorMatrix,
    initial: int,
    horizon: float,
    seed: int,
    path_index: int = 0,
) -> RegimePath:
    """Sample the chain from ``initial`` up to ``horizon``.

    Holding times are drawn by inverse CDF, ``-log1p(-u) / (-q_ii)``, and the
    next regime ``j`` with probability ``q_ij / (-q_ii)``. The stream is keyed
    by ``(seed, path_index)``.
    """
    if horizon <= 0:
        raise InvalidParameter("horizon", horizon, "must be positive")
    if not 0 <= initial < gen.size:
        raise InvalidParameter("initial", initial, f"must index one of {gen.size} regimes")

    rng = philox_stream(seed, path_index)
    cumulative = [np.cumsum(row) for row in jump_chain(gen)]
    times, regimes = [0.0], [initial]
    t, regime = 0.0, initial
    while True:
        rate = gen.exit_rate(regime)
        if rate == 0:
            break
        t += -np.log1p(-rng.random()) / rate
        if t >= horizon:
            break
        regime = int(np.searchsorted(cumulative[regime], rng.random(), side="right"))
        regime = min(regime, gen.size - 1)
        times.append(t)
        regimes.append(regime)

    return RegimePath(tuple(times), tuple(regimes), float(horizon), seed, path_index)


def stationary_distribution(gen: GeneratorMatrix) -> NDArray[np.float64]:
    """Solve ``p Q = 0`` with ``sum(p) = 1`` for an irreducible chain."""
    if not gen.irreducible:
        raise SingularChain("the chain is not irreducible, its stationary law is not unique")

    size = gen.size
    system = np.vstack([gen.rates.T, np.ones(size)])
    target = np.zeros(size + 1)
    target[-1] = 1.0
    p, *_ = np.linalg.lstsq(system, target, rcond=None)
    p = np.clip(p, 0.0, None)
    p /= p.sum()

    residual = np.max(np.abs(p @ gen.rates))
    if residual > ROW_SUM_TOL * max(1.0, np.max(np.abs(gen.rates))):
        raise SingularChain(f"stationary residual {residual:.3g} exceeds tolerance")
    return p


def jump_chain(gen: GeneratorMatrix) -> Sequence[NDArray[np.float64]]:
    """Row-wise jump probabilities ``q_ij / (-q_ii)`` (zero rows for absorbing states)."""
    rows = []
    for regime in range(gen.size):
        rate = gen.exit_rate(regime)
        row = np.clip(gen.rates[regime], 0.0, None)
        row[regime] = 0.0
        rows.append(row / rate if rate > 0 else row)
    return rows
