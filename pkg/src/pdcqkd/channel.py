"""Fiber loss and Bob's threshold-detector measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pdcqkd.mathkit import DomainError
from pdcqkd.source import SignalDistribution, project_x_basis

# nominal polarization -> (basis, index of the correct mode)
_ORIENTATION = {"H": ("Z", 0), "V": ("Z", 1), "+": ("X", 0), "-": ("X", 1)}


@dataclass(frozen=True)
class ChannelParams:
    """Fiber link and receiver.

    Attributes:
        distance: Fiber length in km.
        alpha: Attenuation in dB/km.
        eta_d: Efficiency of Bob's detectors.
        dark: Per-pulse dark-count probability of each of Bob's detectors.
        e_d: Basis misalignment error probability.
    """

    distance: float = 0.0
    alpha: float = 0.2
    eta_d: float = 0.65
    dark: float = 1e-6
    e_d: float = 0.015

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.distance < 0:
            raise DomainError("alpha and distance must be non-negative")
        if not 0.0 <= self.eta_d <= 1.0:
            raise DomainError(f"eta_d must lie in [0, 1], got {self.eta_d!r}")
        if not 0.0 <= self.dark < 1.0:
            raise DomainError(f"dark must lie in [0, 1), got {self.dark!r}")
        if not 0.0 <= self.e_d <= 0.5:
            raise DomainError(f"e_d must lie in [0, 0.5], got {self.e_d!r}")

    @property
    def eta_c(self) -> float:
        return transmittance(self.alpha, self.distance)

    @property
    def t(self) -> float:
        """Overall single-photon detection probability ``eta_c * eta_d``."""
        return self.eta_c * self.eta_d

    def at(self, distance: float) -> ChannelParams:
        return ChannelParams(distance, self.alpha, self.eta_d, self.dark, self.e_d)


@dataclass(frozen=True)
class ClassStats:
    """Observed statistics of one herald class.

    ``gain`` is the joint probability of the herald outcome and an exclusive
    single click at Bob; ``error_gain`` is ``gain * qber``.
    """

    gain: float
    qber: float
    error_gain: float


def transmittance(alpha: float, distance: float) -> float:
    if alpha < 0 or distance < 0:
        raise DomainError("alpha and distance must be non-negative")
    return 10.0 ** (-alpha * distance / 10.0)


def _clicks(m, k, ch: ChannelParams):
    t = ch.t
    d_first = 1.0 - (1.0 - ch.dark) * (1.0 - t) ** m
    d_second = 1.0 - (1.0 - ch.dark) * (1.0 - t) ** k
    return d_first * (1.0 - d_second), d_second * (1.0 - d_first)


def photon_yield(m: int, k: int, ch: ChannelParams) -> float:
    """Probability that exactly one of Bob's two detectors clicks for ``|m, k>``."""
    if m < 0 or k < 0:
        raise DomainError("photon numbers must be non-negative")
    only_first, only_second = _clicks(m, k, ch)
    return float(only_first + only_second)


def error_rate(m: int, k: int, ch: ChannelParams, nominal: str = "H") -> tuple[float, float]:
    """Error yield and error rate of ``|m, k>`` against a nominal polarization.

    For nominal H (or +) the first mode is correct: a lone click there is an
    error with probability ``e_d``, a lone click in the other mode with
    probability ``1 - e_d``.  Nominal V (or -) swaps the roles.

    Returns:
        ``(e*Y, e)`` with ``e = 0`` when the yield vanishes.
    """
    if m < 0 or k < 0:
        raise DomainError("photon numbers must be non-negative")
    _, correct = _orientation(nominal)
    only_first, only_second = _clicks(m, k, ch)
    if correct == 1:
        only_first, only_second = only_second, only_first
    ey = ch.e_d * only_first + (1.0 - ch.e_d) * only_second
    y = only_first + only_second
    return float(ey), float(ey / y) if y > 0 else 0.0


def _orientation(nominal: str) -> tuple[str, int]:
    try:
        return _ORIENTATION[nominal]
    except KeyError:
        raise DomainError(f"nominal polarization must be one of H, V, +, -; got {nominal!r}") from None


def _grid(n_cut: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m, k = np.meshgrid(np.arange(n_cut + 1), np.arange(n_cut + 1), indexing="ij")
    return m, k, (m + k) <= n_cut


def yield_table(n_cut: int, ch: ChannelParams) -> np.ndarray:
    """``Y[m, k]`` for ``m + k <= n_cut`` (zero elsewhere)."""
    m, k, mask = _grid(n_cut)
    only_first, only_second = _clicks(m, k, ch)
    return np.where(mask, only_first + only_second, 0.0)


def error_yield_table(n_cut: int, ch: ChannelParams, nominal: str = "H") -> np.ndarray:
    """``e*Y[m, k]`` for ``m + k <= n_cut`` against ``nominal``."""
    _, correct = _orientation(nominal)
    m, k, mask = _grid(n_cut)
    only_first, only_second = _clicks(m, k, ch)
    if correct == 1:
        only_first, only_second = only_second, only_first
    return np.where(mask, ch.e_d * only_first + (1.0 - ch.e_d) * only_second, 0.0)


def class_stats(dist: SignalDistribution, ch: ChannelParams, nominal: str) -> ClassStats:
    """Gain and QBER of a herald class, errors counted against ``nominal``.

    A Z-basis distribution is projected first when the nominal state is
    diagonal.
    """
    basis, _ = _orientation(nominal)
    if dist.basis != basis:
        if basis == "X":
            dist = project_x_basis(dist)
        else:
            raise DomainError(f"nominal {nominal} needs a Z-basis distribution")
    gain = float(np.sum(dist.table * yield_table(dist.n_cut, ch)))
    error_gain = float(np.sum(dist.table * error_yield_table(dist.n_cut, ch, nominal)))
    qber = error_gain / gain if gain > 0 else 0.0
    return ClassStats(gain, qber, error_gain)
