"""Node identities, roles, run configuration, seeded randomness and failure sampling.

Everything downstream (protocols, engine, analysis) consumes these types, so the
conventions live here:

* all logarithms are base 2,
* ``sqrt_log2(n)`` means ``ceil(sqrt(log2 n))`` and ``log2_log2(n)`` means
  ``ceil(log2 log2 n)``, each computed once per run,
* one master seed fans out into independent labeled sub-streams so that, e.g.,
  failure sampling never perturbs the draws a protocol makes.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# A node id is a plain integer in [0, n); ids are dense.
NodeId = int

NEVER = np.iinfo(np.int64).max  # failure round sentinel: node never fails

MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    """Raised for invalid run parameters."""


class Role(Enum):
    LEADER = "leader"
    CONNECTOR = "connector"


class Mode(Enum):
    JPP = "jpp"
    PUSH = "push"
    PULL = "pull"
    PUSH_PULL_MEDIAN = "pushpull"


class FailureTiming(Enum):
    NONE = "none"
    AT_START = "start"
    PER_ROUND = "per-round"


def log2_log2(n: int) -> int:
    """ceil(log2(log2(n))), clamped at 0 for n = 2."""
    if n < 2:
        raise ConfigError(f"need n >= 2, got {n}")
    return max(0, math.ceil(math.log2(math.log2(n))))


def sqrt_log2(n: int) -> int:
    """ceil(sqrt(log2(n)))."""
    if n < 2:
        raise ConfigError(f"need n >= 2, got {n}")
    return math.ceil(math.sqrt(math.log2(n)))


def leader_probability(n: int) -> float:
    """Per-node probability of becoming a leader: 2^-ceil(sqrt(log2 n))."""
    return 2.0 ** -sqrt_log2(n)


@dataclass(frozen=True)
class SimConfig:
    """All parameters of one run.

    ``c`` multiplies every phase length, ``b`` is the rumor size in bits,
    ``failure_scale`` scales the per-node failure probability
    ``p_f = min(1, failure_scale / 2^ceil(sqrt(log2 n)))``.

    ``rho`` and ``estimate_spread`` are only read when ``non_exact`` is set:
    each node then works from its own size estimate ``n_v`` with
    ``log2 n_v`` drawn uniformly from ``[log2 n / spread, log2 n * spread]``.
    """

    n: int
    c: int = 4
    b: int = 8
    ctr_max_add: int = 2
    failure_scale: float = 0.0
    failure_timing: FailureTiming = FailureTiming.NONE
    mode: Mode = Mode.JPP
    non_exact: bool = False
    rho: int = 2
    estimate_spread: float = 1.0
    seed: int = 0
    start_node: NodeId | str = "random"

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if self.c < 1:
            raise ConfigError(f"c must be a positive integer, got {self.c}")
        if self.b < 1:
            raise ConfigError(f"b must be a positive integer, got {self.b}")
        if self.ctr_max_add < 0:
            raise ConfigError(f"ctr_max_add must be >= 0, got {self.ctr_max_add}")
        if self.failure_scale < 0:
            raise ConfigError(f"failure_scale must be >= 0, got {self.failure_scale}")
        if self.non_exact and self.rho < 2:
            raise ConfigError(f"rho must be >= 2, got {self.rho}")
        if self.non_exact and self.estimate_spread < 1:
            raise ConfigError(
                f"estimate_spread must be >= 1, got {self.estimate_spread}"
            )
        if isinstance(self.start_node, str):
            if self.start_node != "random":
                raise ConfigError(f"start_node must be an id or 'random', got {self.start_node!r}")
        elif not 0 <= self.start_node < self.n:
            raise ConfigError(f"start_node {self.start_node} out of range [0, {self.n})")

    @property
    def failure_probability(self) -> float:
        return min(1.0, self.failure_scale / 2.0 ** sqrt_log2(self.n))

    @property
    def ctr_max(self) -> int:
        """Highest B-substate of the median-counter scheme (minimum 1)."""
        return max(1, log2_log2(self.n) + self.ctr_max_add)

    def resolve_start_node(self, rng: np.random.Generator) -> NodeId:
        if self.start_node == "random":
            return int(rng.integers(0, self.n))
        return int(self.start_node)


@dataclass(frozen=True)
class PhaseLengths:
    """Round counts of each phase for a run with exact knowledge of n."""

    len_phase0: int
    len_subphase: int
    num_subphases: int
    len_phase3: int
    len_phase4: int

    @property
    def total(self) -> int:
        return (
            self.len_phase0
            + self.num_subphases * self.len_subphase
            + self.len_phase3
            + self.len_phase4
        )


def derive_phase_lengths(cfg: SimConfig) -> PhaseLengths:
    """Phase lengths as pure functions of (n, c).

    Phase 0 runs for c*ceil(log2 log2 n) rounds (clamped to at least 1 so tiny
    n still executes the phase); each of the five pointer-jumping sub-phases,
    phase 3 and phase 4 run for c*ceil(sqrt(log2 n)) rounds.
    """
    if cfg.non_exact:
        raise ConfigError("derive_phase_lengths applies to exact-knowledge runs only")
    sub = cfg.c * sqrt_log2(cfg.n)
    return PhaseLengths(
        len_phase0=max(1, cfg.c * log2_log2(cfg.n)),
        len_subphase=sub,
        num_subphases=5,
        len_phase3=sub,
        len_phase4=sub,
    )


def stream(seed: int, label: str) -> np.random.Generator:
    """Deterministic sub-stream for (seed, label).

    Identical (seed, label) pairs yield identical draw sequences; distinct
    labels behave independently. The label is folded in via a stable hash so
    stream identity does not depend on Python's per-process hash salt.
    """
    digest = hashlib.blake2s(label.encode("utf-8"), digest_size=8).digest()
    tag = int.from_bytes(digest, "little")
    return np.random.default_rng(np.random.SeedSequence([seed & MAX_SEED, tag]))


@dataclass
class FailureAssignment:
    """Round at which each node fails; NEVER marks nodes that survive.

    A node with ``failed_at[v] == r`` performs no action and answers no call
    at or after round ``r`` (rounds are 0-based internally).
    """

    failed_at: np.ndarray  # int64, shape (n,)

    def alive_at(self, round_idx: int) -> np.ndarray:
        return self.failed_at > round_idx

    @property
    def failed_count(self) -> int:
        return int((self.failed_at != NEVER).sum())

    def rounds_of(self) -> dict[int, int]:
        """Mapping node -> failure round, omitting nodes that never fail."""
        idx = np.flatnonzero(self.failed_at != NEVER)
        return {int(v): int(self.failed_at[v]) for v in idx}


def sample_failures(
    cfg: SimConfig, rng: np.random.Generator, num_rounds: int
) -> FailureAssignment:
    """Mark each node failed independently with probability p_f.

    AtStart failures bite at round 0; PerRound failure rounds are uniform over
    ``[0, num_rounds)``, which is why the run's round range is a parameter.
    """
    failed_at = np.full(cfg.n, NEVER, dtype=np.int64)
    if cfg.failure_timing is FailureTiming.NONE or cfg.failure_scale == 0:
        return FailureAssignment(failed_at)
    hit = rng.random(cfg.n) < cfg.failure_probability
    if cfg.failure_timing is FailureTiming.AT_START:
        failed_at[hit] = 0
    else:
        rounds = rng.integers(0, max(1, num_rounds), size=cfg.n)
        failed_at[hit] = rounds[hit]
    return FailureAssignment(failed_at)
