"""Decayed Thompson sampling over cluster arms.

Each arm keeps soft win/loss counts. Selection draws one Beta sample per
eligible arm and plays the argmax; the update increments the played arm's
count and then multiplies every count (including the one just incremented)
by the decay factor, discounting stale evidence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


class NoEligibleArmError(RuntimeError):
    """Raised when every arm is masked out (all clusters exhausted)."""


@dataclass
class ArmState:
    wins: float = 0.0
    losses: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.wins) and np.isfinite(self.losses)):
            raise ValueError("win/loss counts must be finite")
        if self.wins < 0.0 or self.losses < 0.0:
            raise ValueError("win/loss counts must be nonnegative")


@dataclass(frozen=True)
class BanditConfig:
    alpha: float = 1.0
    beta: float = 1.0
    delta: float = 0.99

    def __post_init__(self) -> None:
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ValueError("alpha and beta must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass
class BanditState:
    arms: list[ArmState]
    round: int = 0

    @classmethod
    def fresh(cls, k: int) -> BanditState:
        if k < 1:
            raise ValueError("need at least one arm")
        return cls(arms=[ArmState() for _ in range(k)])

    def snapshot(self) -> list[tuple[float, float]]:
        """Per-arm (wins, losses) for the iteration log."""
        return [(arm.wins, arm.losses) for arm in self.arms]


def select_arm(
    state: BanditState,
    cfg: BanditConfig,
    rng,
    eligible: Iterable[int] | None = None,
) -> int:
    """Draw theta_i ~ Beta(alpha + wins_i, beta + losses_i) per eligible arm,
    return the argmax; ties break to the lowest index.

    ``rng`` needs only a ``beta(a, b)`` method, so tests can inject scripted
    draws. ``eligible`` masks exhausted clusters without touching arm state.
    """
    if eligible is None:
        candidates = list(range(len(state.arms)))
    else:
        candidates = sorted(set(eligible))
        if any(i < 0 or i >= len(state.arms) for i in candidates):
            raise IndexError("eligible arm index out of range")
    if not candidates:
        raise NoEligibleArmError("no eligible arms")

    best_idx = -1
    best_theta = -np.inf
    for i in candidates:
        arm = state.arms[i]
        theta = float(rng.beta(cfg.alpha + arm.wins, cfg.beta + arm.losses))
        if theta > best_theta:
            best_theta = theta
            best_idx = i
    return best_idx


def update(state: BanditState, arm_index: int, won: bool, cfg: BanditConfig) -> BanditState:
    """Record one observed reward and decay all counts.

    Increment first, then multiply every arm's wins and losses by delta; the
    just-updated arm is decayed too. Mutates and returns the state; the round
    counter advances by one.
    """
    if arm_index < 0 or arm_index >= len(state.arms):
        raise IndexError(f"arm index {arm_index} out of range")
    arm = state.arms[arm_index]
    if won:
        arm.wins += 1.0
    else:
        arm.losses += 1.0
    for a in state.arms:
        a.wins *= cfg.delta
        a.losses *= cfg.delta
    state.round += 1
    return state
