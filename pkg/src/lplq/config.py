"""Tolerance constants and error types shared across the package."""
from __future__ import annotations

import os
from dataclasses import dataclass, replace

ENV_TOLERANCE_SCALE = "LPLQ_TOLERANCE_SCALE"


class InvariantError(ValueError):
    """A value violates a constructor invariant (bad partition, wrong shape...)."""


class PreconditionError(ValueError):
    """An operation was called outside its domain."""


@dataclass(frozen=True)
class Tolerances:
    eps_part: float = 1e-12   # partition sums
    edge_merge: float = 1e-13  # breakpoints closer than this are identified
    eps_norm: float = 1e-9    # unit-norm checks, isometry witnesses
    level_merge: float = 1e-10

    def scaled(self, factor: float) -> "Tolerances":
        return replace(self, eps_norm=self.eps_norm * factor)


_current = Tolerances()


def tolerances() -> Tolerances:
    scale = os.environ.get(ENV_TOLERANCE_SCALE)
    if scale:
        return _current.scaled(float(scale))
    return _current


def base_tolerances() -> Tolerances:
    """Current tolerances before the environment scale is applied."""
    return _current


def set_tolerances(tol: Tolerances) -> None:
    global _current
    _current = tol


EPS_PART = Tolerances.eps_part
EPS_NORM = Tolerances.eps_norm
