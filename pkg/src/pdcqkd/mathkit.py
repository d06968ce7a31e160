"""Scalar helpers shared by the rest of the package."""

from __future__ import annotations

import math
from dataclasses import dataclass

_EXACT_LOG_FACTORIALS = tuple(math.log(math.factorial(n)) for n in range(21))


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


@dataclass(frozen=True)
class Tolerance:
    """Comparison tolerances.

    Attributes:
        abs_eps: Absolute comparison tolerance.
        rel_eps: Relative comparison tolerance.
        tail_eps: Largest probability mass allowed beyond a truncation order.
    """

    abs_eps: float = 1e-12
    rel_eps: float = 1e-9
    tail_eps: float = 1e-10

    def __post_init__(self) -> None:
        for name in ("abs_eps", "rel_eps", "tail_eps"):
            value = getattr(self, name)
            if not 0.0 < value < 1e-3:
                raise DomainError(f"{name} must lie in (0, 1e-3), got {value!r}")

    def close(self, a: float, b: float) -> bool:
        return abs(a - b) <= max(self.abs_eps, self.rel_eps * max(abs(a), abs(b)))


DEFAULT_TOLERANCE = Tolerance()


def log_factorial(n: int) -> float:
    """Natural log of ``n!``; table lookup up to 20, ``lgamma`` beyond."""
    if n < 0:
        raise DomainError(f"log_factorial needs n >= 0, got {n}")
    if n <= 20:
        return _EXACT_LOG_FACTORIALS[n]
    return math.lgamma(n + 1)


def log_binomial(n: int, k: int) -> float:
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"log_binomial needs 0 <= k <= n, got n={n}, k={k}")
    return log_factorial(n) - log_factorial(k) - log_factorial(n - k)


def binary_entropy(p: float) -> float:
    """Shannon entropy of a biased coin, in bits.

    Args:
        p: Probability of one outcome, in ``[0, 1]``.

    Returns:
        ``-p log2 p - (1-p) log2 (1-p)`` with ``h(0) = h(1) = 0``.

    Raises:
        DomainError: If ``p`` is outside ``[0, 1]`` or not a number.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binary_entropy needs 0 <= p <= 1, got {p!r}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)
