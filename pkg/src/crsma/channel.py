"""Random network drops and the MRC coefficients derived from them.

Users are indexed ``0..K-1``. Under the disparity ladder the index order is
the order of decreasing path-loss factor, so user 0 is the strongest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, db_to_linear

CHANNEL_MODES = ("disparity-ladder", "exponential-mean")


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """All channels of one network drop.

    Attributes
    ----------
    h : (K, N) complex array
        User-to-BS channel vectors.
    h_cross : (K, K) complex array
        Scalar user-to-user links, symmetric with a zero diagonal.
    tau : (K,) float array
        Path-loss factors in (0, 1].
    """

    h: np.ndarray
    h_cross: np.ndarray
    tau: np.ndarray
    mode: str = "disparity-ladder"

    def __post_init__(self):
        for arr in (self.h, self.h_cross, self.tau):
            arr.setflags(write=False)
        K, _ = self.h.shape
        if self.h_cross.shape != (K, K) or self.tau.shape != (K,):
            raise ValueError("inconsistent channel array shapes")

    @property
    def K(self) -> int:
        return self.h.shape[0]

    @property
    def N(self) -> int:
        return self.h.shape[1]

    def norms2(self) -> np.ndarray:
        return np.sum(np.abs(self.h) ** 2, axis=1)

    def users_by_gain(self) -> list[int]:
        """User indices sorted by descending ``||h_k||``, ties by index."""
        n2 = self.norms2()
        return sorted(range(self.K), key=lambda k: (-n2[k], k))

    def same_as(self, other: "ChannelSet") -> bool:
        return (
            self.mode == other.mode
            and np.array_equal(self.h, other.h)
            and np.array_equal(self.h_cross, other.h_cross)
            and np.array_equal(self.tau, other.tau)
        )

    def dump(self) -> str:
        """Debug text, one line per user: index, tau, ||h||^2."""
        n2 = self.norms2()
        return "\n".join(f"{k} {self.tau[k]:.6f} {n2[k]:.6f}" for k in range(self.K)) + "\n"


def ladder_tau(K: int) -> np.ndarray:
    """Path-loss factors decreasing from 1 in steps of 1/K."""
    return 1.0 - np.arange(K) / K


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _symmetric(upper: np.ndarray) -> np.ndarray:
    out = np.triu(upper, k=1)
    return out + out.T


def ladder_channels(xi: np.ndarray, xi_cross: np.ndarray) -> ChannelSet:
    """Assemble a disparity-ladder drop from given small-scale fading.

    ``xi`` is (K, N); ``xi_cross`` is (K, K) and only its strict upper
    triangle is used. Cross links carry the geometric mean of both users'
    path-loss factors.
    """
    K = xi.shape[0]
    tau = ladder_tau(K)
    h = np.sqrt(tau)[:, None] * xi
    tau_cross = np.sqrt(np.outer(tau, tau))
    h_cross = _symmetric(np.sqrt(tau_cross) * xi_cross)
    return ChannelSet(h=h, h_cross=h_cross, tau=tau, mode="disparity-ladder")


def generate_channels(config: SystemConfig, mode: str | None = None,
                      seed: int | np.random.SeedSequence | None = None) -> ChannelSet:
    """Draw one network drop; a pure function of ``(config, mode, seed)``.

    ``mode`` and ``seed`` default to ``config.channel_mode`` and ``config.seed``.
    """
    config.validate()
    mode = mode or config.channel_mode
    if mode not in CHANNEL_MODES:
        raise ValueError(f"unknown channel mode {mode!r}")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    K, N = config.K, config.N
    xi = complex_gaussian(rng, (K, N))
    xi_cross = complex_gaussian(rng, (K, K))
    if mode == "disparity-ladder":
        return ladder_channels(xi, xi_cross)

    # exponential-mean: the first K/2 users are drawn around the CCU mean gain,
    # the rest around the CEU mean; |h|^2 per entry is exponential with that mean
    lam = np.where(np.arange(K) < K // 2, db_to_linear(config.lambda_u), db_to_linear(config.lambda_v))
    h = np.sqrt(lam)[:, None] * xi
    h_cross = _symmetric(np.sqrt(db_to_linear(config.lambda_vu)) * xi_cross)
    tau = lam / lam.max()
    return ChannelSet(h=h, h_cross=h_cross, tau=tau, mode=mode)


@dataclass(frozen=True, eq=False)
class MrcCoefficients:
    """Post-MRC gains that enter every rate expression.

    ``cross_gain[k, k'] = |h_k^H h_k'|^2 / N^2`` (its diagonal is
    ``self_gain``); ``noise_gain[k] = ||h_k||^2 sigma^2 / N^2`` is the
    expected post-combining noise power. ``link_gain[i, j] = |h_{i,j}|^2``
    holds the user-to-user power gains.
    """

    self_gain: np.ndarray
    cross_gain: np.ndarray
    noise_gain: np.ndarray
    link_gain: np.ndarray
    sigma2: float

    def gain(self, k: int, j: int) -> float:
        return float(self.cross_gain[k, j])


def mrc_coefficients(ch: ChannelSet, config: SystemConfig) -> MrcCoefficients:
    N = ch.N
    gram = ch.h.conj() @ ch.h.T
    cross = np.abs(gram) ** 2 / N**2
    norms2 = np.real(np.diag(gram))
    self_gain = norms2**2 / N**2
    np.fill_diagonal(cross, self_gain)
    noise = norms2 * config.sigma2 / N**2
    return MrcCoefficients(
        self_gain=self_gain,
        cross_gain=cross,
        noise_gain=noise,
        link_gain=np.abs(ch.h_cross) ** 2,
        sigma2=config.sigma2,
    )
