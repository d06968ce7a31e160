"""Heralded fully passive PDC source.

A type-II PDC pair state is split on the heralding side by a 50/50 beam
splitter into a Z-basis arm (PBS onto detectors D_H, D_V) and an X-basis arm
(HWP + PBS onto D_+, D_-).  Each of the 16 possible click patterns of the four
herald detectors leaves the signal path in a different mixture of Fock states
``|m>_H |k>_V``.  Those joint (unnormalized) probabilities are what the decoy
linear programs consume.

Signal tables are indexed ``table[m, k]`` with ``m`` the number of photons in
the first basis mode (H, or + after projection) and ``k`` the number in the
second (V, or -).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, NamedTuple

import numpy as np

from pdcqkd.mathkit import (
    DEFAULT_TOLERANCE,
    DomainError,
    Tolerance,
    log_binomial,
    log_factorial,
)

_LOG_HALF_SQRT = -0.5 * math.log(2.0)


class TruncationError(ValueError):
    """Probability mass beyond the truncation order exceeds the tolerance."""


class HeraldClass(enum.Flag):
    """Set of herald detectors that clicked in one pulse."""

    NONE = 0
    PLUS = 1
    MINUS = 2
    H = 4
    V = 8

    @property
    def clicked(self) -> tuple[HeraldClass, ...]:
        return tuple(d for d in DETECTORS if d in self)

    @property
    def is_keygen(self) -> bool:
        return len(self.clicked) == 1

    @property
    def label(self) -> str:
        if not self.value:
            return "0"
        return "".join(_SYMBOLS[d] for d in self.clicked)

    @property
    def slug(self) -> str:
        """Label safe for CSV column names."""
        if not self.value:
            return "none"
        return "".join(_SLUGS[d] for d in self.clicked)

    @property
    def basis(self) -> str:
        """Measurement basis of a single-click class ("Z" or "X")."""
        if not self.is_keygen:
            raise DomainError(f"class {self.label} does not generate key")
        return "Z" if self in (HeraldClass.H, HeraldClass.V) else "X"

    @property
    def nominal(self) -> str:
        """Signal polarization announced by a single-click herald.

        A click on D_H heralds a V signal photon and vice versa; the X arm
        heralds the same diagonal state it detects.
        """
        if not self.is_keygen:
            raise DomainError(f"class {self.label} does not generate key")
        return _NOMINAL[self]

    @classmethod
    def from_label(cls, text: str) -> HeraldClass:
        text = text.strip()
        if text in ("0", "", "none"):
            return cls.NONE
        if text == "4":
            return cls.PLUS | cls.MINUS | cls.H | cls.V
        result = cls.NONE
        for ch in text:
            try:
                det = _FROM_SYMBOL[ch]
            except KeyError:
                raise DomainError(f"unknown detector symbol {ch!r} in {text!r}") from None
            if det in result:
                raise DomainError(f"detector {ch!r} repeated in {text!r}")
            result |= det
        return result


DETECTORS = (HeraldClass.PLUS, HeraldClass.MINUS, HeraldClass.H, HeraldClass.V)
ALL_CLASSES = tuple(HeraldClass(v) for v in range(16))
KEYGEN_CLASSES = (HeraldClass.H, HeraldClass.V, HeraldClass.PLUS, HeraldClass.MINUS)

_SYMBOLS = {HeraldClass.PLUS: "+", HeraldClass.MINUS: "-", HeraldClass.H: "H", HeraldClass.V: "V"}
_SLUGS = {HeraldClass.PLUS: "P", HeraldClass.MINUS: "M", HeraldClass.H: "H", HeraldClass.V: "V"}
_FROM_SYMBOL = {
    "+": HeraldClass.PLUS,
    "P": HeraldClass.PLUS,
    "-": HeraldClass.MINUS,
    "M": HeraldClass.MINUS,
    "H": HeraldClass.H,
    "V": HeraldClass.V,
}
_NOMINAL = {HeraldClass.H: "V", HeraldClass.V: "H", HeraldClass.PLUS: "+", HeraldClass.MINUS: "-"}


class HeraldCounts(NamedTuple):
    """Photon numbers arriving at D_+, D_-, D_H and D_V."""

    n_plus: int = 0
    n_minus: int = 0
    n_H: int = 0
    n_V: int = 0

    @property
    def total(self) -> int:
        return self.n_plus + self.n_minus + self.n_H + self.n_V


def _pair_tail(lam: float, n_cut: int) -> float:
    # sum_{n > n_cut} (n+1) x^n (1-x)^2 = x^N (N + 1 - N x), N = n_cut + 1
    x = lam / (1.0 + lam)
    big_n = n_cut + 1
    return x**big_n * (big_n + 1 - big_n * x)


@dataclass(frozen=True)
class SourceParams:
    """Heralded PDC source settings.

    Attributes:
        lam: Pair parameter ``sinh^2`` of the squeezing; mean pair number is ``2*lam``.
        eta_h: Efficiency shared by the four herald detectors.
        dark: Per-pulse dark-count probability of each herald detector.
        n_cut: Largest total pair number kept in every table.
        tol: Tolerance policy; ``tail_eps`` bounds the discarded pair mass.
    """

    lam: float
    eta_h: float = 0.65
    dark: float = 1e-6
    n_cut: int = 10
    tol: Tolerance = field(default=DEFAULT_TOLERANCE, compare=True)

    def __post_init__(self) -> None:
        if not self.lam > 0.0:
            raise DomainError(f"lambda must be positive, got {self.lam!r}")
        if not 0.0 <= self.eta_h <= 1.0:
            raise DomainError(f"eta_h must lie in [0, 1], got {self.eta_h!r}")
        if not 0.0 <= self.dark < 1.0:
            raise DomainError(f"dark must lie in [0, 1), got {self.dark!r}")
        if self.n_cut < 2:
            raise DomainError(f"n_cut must be at least 2, got {self.n_cut}")
        tail = self.tail
        if tail > self.tol.tail_eps:
            raise TruncationError(
                f"pair mass beyond n_cut={self.n_cut} is {tail:.3g} > "
                f"tail_eps={self.tol.tail_eps:.3g} at lambda={self.lam:g}; raise n_cut"
            )

    @property
    def tail(self) -> float:
        return _pair_tail(self.lam, self.n_cut)

    @classmethod
    def auto_cut(cls, lam: float, *, min_cut: int = 10, max_cut: int = 40, **kwargs) -> SourceParams:
        """Build params with the smallest ``n_cut >= min_cut`` meeting the tail tolerance."""
        tol = kwargs.get("tol", DEFAULT_TOLERANCE)
        for n_cut in range(min_cut, max_cut + 1):
            if _pair_tail(lam, n_cut) <= tol.tail_eps:
                return cls(lam, n_cut=n_cut, **kwargs)
        raise TruncationError(f"no n_cut <= {max_cut} reaches tail_eps at lambda={lam:g}")


def pair_number_prob(params: SourceParams | float, n: int) -> float:
    """Probability that the source emits exactly ``n`` pairs.

    ``params`` may be a :class:`SourceParams` or the bare pair parameter; the
    latter also accepts ``0`` (no pumping).
    """
    lam = params.lam if isinstance(params, SourceParams) else float(params)
    if n < 0:
        raise DomainError(f"pair number must be non-negative, got {n}")
    if lam < 0:
        raise DomainError(f"lambda must be non-negative, got {lam}")
    if lam == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(math.log(n + 1) + n * math.log(lam) - (n + 2) * math.log1p(lam))


def heralding_amplitude(n: int, m: int, counts: HeraldCounts) -> float:
    """Amplitude of ``|counts>_herald |m>_bH |n-m>_bV`` within the n-pair state.

    The herald carries ``n-m`` H photons and ``m`` V photons.  Each H photon
    maps to ``(c_H + c_V)/2 + d_H/sqrt2`` and each V photon to
    ``(c_H - c_V)/2 + d_V/sqrt2``, with ``c_H, c_V, d_H, d_V`` feeding
    D_+, D_-, D_H, D_V.  Terms are summed as signed log magnitudes.
    """
    counts = HeraldCounts(*counts)
    n_p, n_m, i3, j3 = counts
    if not 0 <= m <= n or min(counts) < 0 or counts.total != n or i3 > n - m or j3 > m:
        raise DomainError(f"herald counts {tuple(counts)} inconsistent with n={n}, m={m}")
    rest_h = n - m - i3  # H photons shared between D_+ and D_-
    prefix = (
        0.5 * (log_factorial(m) + log_factorial(n - m) - math.log(n + 1))
        + 0.5 * (log_factorial(n_p) + log_factorial(n_m) + log_factorial(i3) + log_factorial(j3))
        + (2 * n - i3 - j3) * _LOG_HALF_SQRT
        - log_factorial(i3)
        - log_factorial(j3)
    )
    terms = []
    for i1 in range(max(0, rest_h - n_m), min(n_p, rest_h) + 1):
        i2 = rest_h - i1
        j1 = n_p - i1
        j2 = n_m - i2
        if j1 < 0 or j2 < 0:
            continue
        log_mag = prefix - (
            log_factorial(i1) + log_factorial(i2) + log_factorial(j1) + log_factorial(j2)
        )
        terms.append(-math.exp(log_mag) if j2 % 2 else math.exp(log_mag))
    return math.fsum(terms)


def click_prob(n_photons: int | np.ndarray, eta: float, dark: float):
    """Threshold detector click probability ``1 - (1-Pd)(1-eta)^n``."""
    return 1.0 - (1.0 - dark) * (1.0 - eta) ** n_photons


def click_class_prob(counts: HeraldCounts, cls: HeraldClass, eta_h: float, dark: float) -> float:
    """Probability that exactly the detectors in ``cls`` click."""
    prob = 1.0
    for det, n_d in zip(DETECTORS, HeraldCounts(*counts)):
        d = click_prob(n_d, eta_h, dark)
        prob *= d if det in cls else 1.0 - d
    return prob


def click_class_probs(counts: np.ndarray, eta_h: float, dark: float) -> np.ndarray:
    """Vectorized click model.

    Args:
        counts: Integer array ``(K, 4)`` of photon numbers in detector order
            D_+, D_-, D_H, D_V.

    Returns:
        Array ``(16, K)``; row ``v`` holds the probability of ``HeraldClass(v)``.
    """
    d = click_prob(np.asarray(counts, dtype=float), eta_h, dark)
    out = np.ones((16, d.shape[0]))
    for v in range(16):
        for bit in range(4):
            out[v] *= d[:, bit] if v >> bit & 1 else 1.0 - d[:, bit]
    return out


def herald_configurations(n: int) -> list[HeraldCounts]:
    """All ways of distributing ``n`` herald photons over the four detectors."""
    configs = []
    for n_h in range(n + 1):
        for n_v in range(n - n_h + 1):
            for n_p in range(n - n_h - n_v + 1):
                configs.append(HeraldCounts(n_p, n - n_h - n_v - n_p, n_h, n_v))
    return configs


@lru_cache(maxsize=None)
def amplitude_block(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Heralding amplitudes of the n-pair sector.

    Returns:
        ``(configs, amps)`` where ``configs`` is ``(K, 4)`` and ``amps[c, m]``
        is the amplitude for herald configuration ``c`` and ``m`` signal H
        photons (zero where the configuration is unreachable).
    """
    configs = herald_configurations(n)
    amps = np.zeros((len(configs), n + 1))
    for c, counts in enumerate(configs):
        for m in range(counts.n_V, n - counts.n_H + 1):
            amps[c, m] = heralding_amplitude(n, m, counts)
    configs_arr = np.array(configs, dtype=int)
    configs_arr.setflags(write=False)
    amps.setflags(write=False)
    return configs_arr, amps


@dataclass(frozen=True, eq=False)
class SignalDistribution:
    """Joint photon-number table of the signal path for one herald outcome.

    Entries sum to the probability of the herald outcome, not to one.

    Attributes:
        table: ``(n_cut+1, n_cut+1)`` array; ``table[m, k]`` is nonzero only
            for ``m + k <= n_cut``.
        tail: Probability mass beyond the truncation order (shared by all
            classes of one source).
        herald: Conditioning class, ``None`` for the Poissonian source.
        basis: ``"Z"`` for (H, V) counts, ``"X"`` for (+, -) counts.
        blocks: Optional per-photon-number density matrices in ``basis``;
            ``blocks[n][m, m']`` couples ``|m, n-m>`` and ``|m', n-m'>``.
        name: Display label.
    """

    table: np.ndarray
    tail: float
    herald: HeraldClass | None = None
    basis: str = "Z"
    blocks: tuple[np.ndarray, ...] | None = None
    name: str = ""

    def __post_init__(self) -> None:
        table = np.array(self.table, dtype=float)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise DomainError("signal table must be square")
        n_cut = table.shape[0] - 1
        mask = np.add.outer(np.arange(n_cut + 1), np.arange(n_cut + 1)) > n_cut
        if np.any(table[mask] != 0.0):
            raise DomainError("signal table has entries beyond the truncation order")
        if np.any(table < 0.0) or np.any(table > 1.0) or self.tail < 0.0:
            raise DomainError("signal probabilities must lie in [0, 1]")
        if table.sum() + self.tail > 1.0 + 1e-9:
            raise DomainError("signal probabilities exceed unit total")
        if self.basis not in ("Z", "X"):
            raise DomainError(f"unknown basis {self.basis!r}")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        if not self.name:
            label = self.herald.label if self.herald is not None else "poisson"
            object.__setattr__(self, "name", label)

    @property
    def n_cut(self) -> int:
        return self.table.shape[0] - 1

    def prob(self, m: int, k: int) -> float:
        if m < 0 or k < 0 or m + k > self.n_cut:
            return 0.0
        return float(self.table[m, k])

    def total(self) -> float:
        return float(self.table.sum())

    def photon_number(self) -> np.ndarray:
        """Marginal over total signal photon number ``n = m + k``."""
        out = np.zeros(self.n_cut + 1)
        for n in range(self.n_cut + 1):
            out[n] = sum(self.table[m, n - m] for m in range(n + 1))
        return out

    def normalized(self) -> np.ndarray:
        """Table conditioned on the herald outcome (sums to one)."""
        total = self.total()
        if total == 0.0:
            return np.zeros_like(self.table)
        return self.table / total

    def entries(self) -> Iterator[tuple[int, int, float]]:
        for n in range(self.n_cut + 1):
            for m in range(n + 1):
                yield m, n - m, float(self.table[m, n - m])


def _table_from_blocks(blocks: list[np.ndarray], n_cut: int) -> np.ndarray:
    table = np.zeros((n_cut + 1, n_cut + 1))
    for n, rho in enumerate(blocks):
        diag = np.clip(np.diag(rho), 0.0, None)
        for m in range(n + 1):
            table[m, n - m] = diag[m]
    return table


@lru_cache(maxsize=64)
def herald_distributions(params: SourceParams) -> dict[HeraldClass, SignalDistribution]:
    """Z-basis signal distributions of all 16 herald classes."""
    n_cut = params.n_cut
    per_class_blocks: list[list[np.ndarray]] = [[] for _ in range(16)]
    for n in range(n_cut + 1):
        configs, amps = amplitude_block(n)
        gammas = click_class_probs(configs, params.eta_h, params.dark)
        p_n = pair_number_prob(params, n)
        for v in range(16):
            rho = p_n * (amps.T * gammas[v]) @ amps
            per_class_blocks[v].append(rho)
    tail = params.tail
    out = {}
    for cls in ALL_CLASSES:
        blocks = per_class_blocks[cls.value]
        for rho in blocks:
            rho.setflags(write=False)
        out[cls] = SignalDistribution(
            _table_from_blocks(blocks, n_cut), tail, cls, "Z", tuple(blocks)
        )
    return out


def signal_distribution(params: SourceParams, cls: HeraldClass) -> SignalDistribution:
    """Joint Z-basis signal distribution for herald class ``cls``."""
    return herald_distributions(params)[cls]


@lru_cache(maxsize=None)
def x_basis_matrix(n: int) -> np.ndarray:
    """Fock-space rotation of the n-photon sector from (H, V) to (+, -).

    ``U[t, m]`` is the amplitude of ``|t>_+ |n-t>_-`` in ``|m>_H |n-m>_V``.
    """
    u = np.zeros((n + 1, n + 1))
    for m in range(n + 1):
        for t in range(n + 1):
            acc = []
            for x in range(max(0, t - (n - m)), min(m, t) + 1):
                y = t - x
                log_mag = log_binomial(m, x) + log_binomial(n - m, y)
                acc.append((-1.0 if (n - m - y) % 2 else 1.0) * math.exp(log_mag))
            scale = 0.5 * (
                log_factorial(t) + log_factorial(n - t) - log_factorial(m) - log_factorial(n - m)
            ) + n * _LOG_HALF_SQRT
            u[t, m] = math.exp(scale) * math.fsum(acc)
    u.setflags(write=False)
    return u


def project_x_basis(dist: SignalDistribution) -> SignalDistribution:
    """Re-express a Z-basis signal distribution in the (+, -) basis.

    When ``dist`` carries density blocks the rotation is applied to them, so
    mixtures from different herald configurations stay incoherent.  A bare
    table is read as the pure state ``sum sqrt(P(m, n-m)) |m, n-m>`` and the
    amplitudes are summed coherently.
    """
    if dist.basis != "Z":
        raise DomainError("project_x_basis expects a Z-basis distribution")
    blocks_x = []
    for n in range(dist.n_cut + 1):
        u = x_basis_matrix(n)
        if dist.blocks is not None:
            rho = dist.blocks[n]
        else:
            amp = np.sqrt([dist.table[m, n - m] for m in range(n + 1)])
            rho = np.outer(amp, amp)
        rho_x = u @ rho @ u.T
        rho_x.setflags(write=False)
        blocks_x.append(rho_x)
    return SignalDistribution(
        _table_from_blocks(blocks_x, dist.n_cut),
        dist.tail,
        dist.herald,
        "X",
        tuple(blocks_x),
        dist.name,
    )


@lru_cache(maxsize=64)
def herald_distributions_x(params: SourceParams) -> dict[HeraldClass, SignalDistribution]:
    """X-basis signal distributions of all 16 herald classes."""
    return {cls: project_x_basis(d) for cls, d in herald_distributions(params).items()}


def distributions_in_basis(params: SourceParams, basis: str) -> dict[HeraldClass, SignalDistribution]:
    if basis == "Z":
        return herald_distributions(params)
    if basis == "X":
        return herald_distributions_x(params)
    raise DomainError(f"unknown basis {basis!r}")


def poisson_pair_prob(lam: float, n: int) -> float:
    # normalized two-mode Poissonian pair statistics with mean |lam|^2
    if lam == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(2 * n * math.log(abs(lam)) - log_factorial(n) - lam * lam)


def poisson_heralded_dists(
    lam: float,
    eta_h: float,
    dark: float,
    n_cut: int,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> tuple[SignalDistribution, SignalDistribution]:
    """Click / no-click conditioned signal distributions of a Poissonian PDC source.

    Both are single-mode, stored in the ``k = 0`` column.
    """
    if lam < 0 or not 0.0 <= eta_h <= 1.0 or not 0.0 <= dark < 1.0 or n_cut < 0:
        raise DomainError("invalid Poissonian source parameters")
    click = np.zeros((n_cut + 1, n_cut + 1))
    no_click = np.zeros((n_cut + 1, n_cut + 1))
    for n in range(n_cut + 1):
        p_n = poisson_pair_prob(lam, n)
        nd = (1.0 - dark) * (1.0 - eta_h) ** n
        click[n, 0] = p_n * (1.0 - nd)
        no_click[n, 0] = p_n * nd
    tail_terms = []
    n = n_cut + 1
    while True:
        term = poisson_pair_prob(lam, n)
        tail_terms.append(term)
        if term < 1e-18 * max(1.0, sum(tail_terms)) or n > n_cut + 400:
            break
        n += 1
    tail = math.fsum(tail_terms)
    if tail > tol.tail_eps:
        raise TruncationError(
            f"Poissonian mass beyond n_cut={n_cut} is {tail:.3g} > tail_eps={tol.tail_eps:.3g}"
        )
    return (
        SignalDistribution(click, tail, None, "Z", None, "click"),
        SignalDistribution(no_click, tail, None, "Z", None, "no-click"),
    )
