"""Secret-key rates, distance limits and operating-point optimization."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from pdcqkd.channel import ChannelParams, ClassStats, class_stats, error_rate, photon_yield
from pdcqkd.decoy import (
    OPTIMAL,
    DecoyBounds,
    SolverError,
    single_photon_bounds,
    single_photon_truth,
)
from pdcqkd.mathkit import DomainError, binary_entropy
from pdcqkd.source import (
    ALL_CLASSES,
    KEYGEN_CLASSES,
    HeraldClass,
    SourceParams,
    distributions_in_basis,
    herald_distributions,
)

log = logging.getLogger(__name__)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ProtocolParams:
    """Post-processing and timing settings.

    Attributes:
        q: Basis reconciliation factor.
        f: Error-correction inefficiency.
        pulse_rate: Source repetition rate in Hz.
        keygen_classes: Herald classes whose pulses are distilled into key.
    """

    q: float = 0.5
    f: float = 1.16
    pulse_rate: float = 1e6
    keygen_classes: tuple[HeraldClass, ...] = KEYGEN_CLASSES

    def __post_init__(self) -> None:
        if not 0.0 < self.q <= 1.0:
            raise DomainError(f"q must lie in (0, 1], got {self.q!r}")
        if self.f < 1.0:
            raise DomainError(f"f must be at least 1, got {self.f!r}")
        if not self.pulse_rate > 0.0:
            raise DomainError(f"pulse_rate must be positive, got {self.pulse_rate!r}")
        classes = tuple(self.keygen_classes)
        if not classes or any(not c.is_keygen for c in classes):
            raise DomainError("keygen_classes must be a non-empty set of single-click classes")
        object.__setattr__(self, "keygen_classes", classes)


@dataclass(frozen=True)
class ClassRate:
    herald: HeraldClass
    herald_prob: float
    gain: float
    qber: float
    p1y1_lower: float
    e1_upper: float
    rate: float  # unclamped


@dataclass(frozen=True)
class RatePoint:
    """Key rate at one distance and pair parameter.

    ``per_pulse_rate`` counts secret bits per source pulse (herald success is
    already inside the joint gains), ``heralded_rate`` the same bits per
    pulse that fired a key-generating herald class.
    """

    distance: float
    lam: float
    per_pulse_rate: float
    throughput: float
    heralded_rate: float
    herald_prob: float
    classes: tuple[ClassRate, ...] = field(default=())

    def by_class(self, cls: HeraldClass) -> ClassRate:
        for c in self.classes:
            if c.herald == cls:
                return c
        raise KeyError(cls)


def class_key_rate(bounds: DecoyBounds, stats: ClassStats, p: ProtocolParams) -> float:
    """Per-pulse secret fraction of one class, not clamped at zero."""
    if bounds.status != OPTIMAL:
        raise SolverError(f"decoy bounds are {bounds.status}")
    e1 = min(max(bounds.e1_upper, 0.0), 0.5)
    qber = min(max(stats.qber, 0.0), 1.0)
    return p.q * (
        bounds.p1y1_lower * (1.0 - binary_entropy(e1)) - stats.gain * p.f * binary_entropy(qber)
    )


def keygen_bounds(
    src: SourceParams, ch: ChannelParams, cls: HeraldClass, exact: bool = False
) -> tuple[DecoyBounds, ClassStats]:
    """Decoy bounds and own statistics of a key-generating class.

    All 16 classes enter the programs in the target's basis with errors
    counted against the target's nominal polarization.  With ``exact`` the
    forward-model single-photon values replace the programs.
    """
    dists = distributions_in_basis(src, cls.basis)
    stats = {c: class_stats(dists[c], ch, cls.nominal) for c in ALL_CLASSES}
    if exact:
        p1y1, e1 = single_photon_truth(dists[cls], ch, cls.nominal)
        bounds = DecoyBounds(p1y1, p1y1 * e1, e1, OPTIMAL)
    else:
        bounds = single_photon_bounds(dists, stats, cls, src.tol)
        if bounds.status != OPTIMAL:
            raise SolverError(
                f"decoy program for class {cls.label} is {bounds.status} "
                f"(lambda={src.lam:g}, L={ch.distance:g} km)"
            )
    return bounds, stats[cls]


def total_rate(
    src: SourceParams, ch: ChannelParams, p: ProtocolParams | None = None, *, exact: bool = False
) -> RatePoint:
    """Aggregate key rate over the key-generating herald classes."""
    p = p or ProtocolParams()
    z_dists = herald_distributions(src)
    parts = []
    for cls in p.keygen_classes:
        bounds, stats = keygen_bounds(src, ch, cls, exact)
        parts.append(
            ClassRate(
                cls,
                z_dists[cls].total(),
                stats.gain,
                stats.qber,
                bounds.p1y1_lower,
                bounds.e1_upper,
                class_key_rate(bounds, stats, p),
            )
        )
    per_pulse = sum(max(c.rate, 0.0) for c in parts)
    herald_prob = sum(c.herald_prob for c in parts)
    heralded = per_pulse / herald_prob if herald_prob > 0 else 0.0
    return RatePoint(
        ch.distance, src.lam, per_pulse, p.pulse_rate * per_pulse, heralded, herald_prob, tuple(parts)
    )


def last_positive(rate_at: Callable[[float], float], resolution: float = 0.1, limit: float = 2000.0) -> float:
    """Largest distance (to ``resolution``) where ``rate_at`` is positive.

    Assumes the rate has a single sign change in distance; returns 0 when the
    rate is not positive at zero distance.
    """
    if rate_at(0.0) <= 0.0:
        return 0.0
    lo, hi = 0.0, 50.0
    while rate_at(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > limit:
            return limit
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if rate_at(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def max_distance(
    src: SourceParams, p: ProtocolParams | None = None, ch_template: ChannelParams | None = None
) -> float:
    """Largest fiber length in km with a positive key rate."""
    p = p or ProtocolParams()
    ch_template = ch_template or ChannelParams()
    return last_positive(lambda d: total_rate(src, ch_template.at(d), p).per_pulse_rate)


def _maximize_log(
    fn: Callable[[float], float], lo: float, hi: float, n_grid: int, rel_tol: float
) -> tuple[float, float, list[tuple[float, float]]]:
    """Log-grid scan followed by golden-section refinement in ``log x``."""
    grid = np.geomspace(lo, hi, n_grid)
    values = [fn(float(x)) for x in grid]
    scan = list(zip(grid.tolist(), values))
    best = int(np.argmax(values))
    if values[best] <= 0.0:
        return float("nan"), 0.0, scan
    a = math.log(grid[max(best - 1, 0)])
    b = math.log(grid[min(best + 1, n_grid - 1)])
    cache: dict[float, float] = {}

    def g(u: float) -> float:
        if u not in cache:
            cache[u] = fn(math.exp(u))
        return cache[u]

    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    while math.exp(b - a) - 1.0 > rel_tol:
        if g(c) >= g(d):
            b, d = d, c
            c = b - _GOLDEN * (b - a)
        else:
            a, c = c, d
            d = a + _GOLDEN * (b - a)
    x_best, f_best = float(grid[best]), float(values[best])
    for u, val in cache.items():
        if val > f_best:
            x_best, f_best = math.exp(u), val
    return x_best, f_best, scan


def optimize_lambda(
    ch: ChannelParams,
    p: ProtocolParams | None = None,
    lambda_range: tuple[float, float] = (1e-4, 0.3),
    *,
    eta_h: float = 0.65,
    dark: float = 1e-6,
    n_cut: int = 10,
    n_grid: int = 40,
    rel_tol: float = 1e-3,
) -> tuple[float, RatePoint]:
    """Pair parameter maximizing throughput at one distance.

    ``n_cut`` is a floor; larger pair parameters get the smallest truncation
    order that keeps the discarded mass within tolerance.
    """
    p = p or ProtocolParams()
    lo, hi = lambda_range
    if not 0.0 < lo < hi <= 1.0:
        raise DomainError(f"lambda_range must satisfy 0 < lo < hi <= 1, got {lambda_range}")

    def point(lam: float) -> RatePoint:
        return total_rate(SourceParams.auto_cut(lam, min_cut=n_cut, eta_h=eta_h, dark=dark), ch, p)

    lam_best, _, _ = _maximize_log(lambda x: point(x).throughput, lo, hi, n_grid, rel_tol)
    if math.isnan(lam_best):
        mid = 0.5 * (lo + hi)
        warnings.warn(f"zero throughput over lambda range at L={ch.distance:g} km", RuntimeWarning)
        return mid, point(mid)
    return lam_best, point(lam_best)


def wcp_gain_error(mu: float, ch: ChannelParams) -> tuple[float, float]:
    """Gain and QBER of an H-polarized phase-randomized coherent pulse."""
    n_max = int(mu + 12.0 * math.sqrt(mu) + 25)
    gain = 0.0
    err = 0.0
    for n in range(n_max + 1):
        pn = math.exp(n * math.log(mu) - math.lgamma(n + 1) - mu) if mu > 0 else float(n == 0)
        ey, _ = error_rate(n, 0, ch, "H")
        gain += pn * photon_yield(n, 0, ch)
        err += pn * ey
    return gain, err / gain if gain > 0 else 0.0


def active_wcp_baseline(mu: float, ch: ChannelParams, p: ProtocolParams | None = None) -> float:
    """Asymptotic decoy BB84 rate per pulse with exactly known single-photon terms."""
    if not mu > 0.0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    p = p or ProtocolParams()
    gain, qber = wcp_gain_error(mu, ch)
    y1 = photon_yield(1, 0, ch)
    _, e1 = error_rate(1, 0, ch, "H")
    single = mu * math.exp(-mu) * y1 * (1.0 - binary_entropy(min(e1, 0.5)))
    return p.q * (single - gain * p.f * binary_entropy(min(qber, 1.0)))


def optimal_wcp_baseline(
    ch: ChannelParams,
    p: ProtocolParams | None = None,
    mu_range: tuple[float, float] = (1e-3, 2.0),
    n_grid: int = 40,
    rel_tol: float = 1e-3,
) -> tuple[float, float]:
    """``(mu*, R*)`` of the baseline, re-optimized at this distance."""
    p = p or ProtocolParams()
    mu, rate, _ = _maximize_log(lambda m: active_wcp_baseline(m, ch, p), *mu_range, n_grid, rel_tol)
    if math.isnan(mu):
        return 0.5 * (mu_range[0] + mu_range[1]), 0.0
    return mu, rate


def wcp_max_distance(p: ProtocolParams | None = None, ch_template: ChannelParams | None = None) -> float:
    ch_template = ch_template or ChannelParams()
    return last_positive(lambda d: optimal_wcp_baseline(ch_template.at(d), p)[1])
