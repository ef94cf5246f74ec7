"""System parameters shared by every stage of the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace


class ConfigError(ValueError):
    """Raised when a system or experiment configuration is invalid."""


def dbm_to_watts(dbm: float) -> float:
    """Convert a power level in dBm to watts. ``-inf`` maps to zero."""
    if dbm == -math.inf:
        return 0.0
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


DEFAULT_DELTA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))


@dataclass(frozen=True)
class SystemConfig:
    """Network and optimizer settings for one experiment point.

    Power budgets are given in dBm; everything downstream works in watts.
    ``sigma2`` is the linear noise variance.
    """

    K: int = 6
    N: int = 8
    sigma2: float = 1.0
    p_u_max: float = 23.0
    p_v_max: float = 15.0
    r_th_u: float = 0.5
    r_th_v: float = 0.1
    theta: float = 0.4
    delta_grid: tuple[float, ...] = DEFAULT_DELTA_GRID
    eps: float = 1e-3
    max_iter: int = 30
    seed: int = 0
    lambda_u: float = 15.0
    lambda_v: float = 7.0
    lambda_vu: float = 12.0
    channel_mode: str = "exponential-mean"
    solver: str = "CLARABEL"
    log_mode: str = "exp"

    def __post_init__(self):
        object.__setattr__(self, "delta_grid", tuple(float(d) for d in self.delta_grid))
        self.validate()

    def validate(self) -> None:
        if self.K < 2 or self.K % 2:
            raise ConfigError(f"K must be even and >= 2, got {self.K}")
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.delta_grid:
            raise ConfigError("delta_grid must not be empty")
        if any(not 0.0 < d <= 1.0 for d in self.delta_grid):
            raise ConfigError(f"delta_grid values must lie in (0, 1]: {self.delta_grid}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.sigma2 > 0 or not math.isfinite(self.sigma2):
            raise ConfigError(f"sigma2 must be positive and finite, got {self.sigma2}")
        # -inf dBm is allowed and means a zero budget
        for name in ("p_u_max", "p_v_max"):
            value = getattr(self, name)
            if math.isnan(value) or value == math.inf:
                raise ConfigError(f"{name} must be finite or -inf, got {value}")
        for name in ("r_th_u", "r_th_v"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.channel_mode not in ("disparity-ladder", "exponential-mean"):
            raise ConfigError(f"unknown channel mode {self.channel_mode!r}")
        if self.log_mode not in ("exp", "pwl"):
            raise ConfigError(f"unknown log mode {self.log_mode!r}")

    @property
    def U(self) -> int:
        return self.K // 2

    @property
    def pu_max_w(self) -> float:
        return dbm_to_watts(self.p_u_max)

    @property
    def pv_max_w(self) -> float:
        return dbm_to_watts(self.p_v_max)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]
