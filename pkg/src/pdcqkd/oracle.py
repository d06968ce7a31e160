"""Brute-force reference for the heralded signal statistics.

The n-pair state is expanded as a polynomial in creation operators over six
labeled modes, with exact rational coefficients and the powers of ``1/sqrt2``
tracked separately.  Fock-state probabilities follow by exact arithmetic;
floating point enters only through the pair-number distribution and the
click model.  Nothing here uses the closed-form heralding amplitude.

Mode order of every exponent tuple: ``c_H`` (to D_+), ``c_V`` (to D_-),
``d_H`` (to D_H), ``d_V`` (to D_V), then the two signal modes (``b_H, b_V``,
or ``b_+, b_-`` after rotation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from pdcqkd.mathkit import DomainError
from pdcqkd.source import (
    ALL_CLASSES,
    HeraldClass,
    SignalDistribution,
    SourceParams,
    click_class_probs,
    herald_distributions,
    herald_distributions_x,
    pair_number_prob,
)

ORACLE_MAX_N = 8

Exponents = tuple[int, int, int, int, int, int]


@dataclass(frozen=True)
class ModeMonomial:
    """``coefficient * 2**(-sqrt2_power/2) * prod(mode_i^dagger ** exponents[i])``."""

    exponents: Exponents
    coefficient: Fraction
    sqrt2_power: int = 0

    @property
    def value(self) -> float:
        return float(self.coefficient) * 2.0 ** (-self.sqrt2_power / 2)

    def squared(self) -> Fraction:
        """Exact square of the coefficient including the ``sqrt2`` factor."""
        return self.coefficient**2 / Fraction(2) ** self.sqrt2_power


def _normalized(coef: Fraction, s: int) -> tuple[Fraction, int]:
    # keep the sqrt2 power at 0 or 1 so equal monomials collect by addition
    return coef / 2 ** (s // 2), s % 2


def _multiply(left: list[ModeMonomial], right: list[ModeMonomial]) -> list[ModeMonomial]:
    out = []
    for a in left:
        for b in right:
            exps = tuple(x + y for x, y in zip(a.exponents, b.exponents))
            coef, s = _normalized(a.coefficient * b.coefficient, a.sqrt2_power + b.sqrt2_power)
            out.append(ModeMonomial(exps, coef, s))
    return out


def collect(monomials: Iterable[ModeMonomial]) -> list[ModeMonomial]:
    """Merge equal exponent tuples; drops terms that cancel exactly."""
    acc: dict[Exponents, list] = {}
    for mono in monomials:
        coef, s = _normalized(mono.coefficient, mono.sqrt2_power)
        if mono.exponents in acc:
            prev_coef, prev_s = acc[mono.exponents]
            if prev_s != s:
                # an irrational sum would have no single sqrt2 power
                raise ArithmeticError(f"mixed sqrt2 parity at {mono.exponents}")
            acc[mono.exponents][0] = prev_coef + coef
        else:
            acc[mono.exponents] = [coef, s]
    return [ModeMonomial(e, c, s) for e, (c, s) in sorted(acc.items()) if c != 0]


def _unit(mode: int, coef: Fraction, s: int) -> ModeMonomial:
    exps = [0] * 6
    exps[mode] = 1
    return ModeMonomial(tuple(exps), coef, s)


_HALF = Fraction(1, 2)
# a_H -> (c_H + c_V)/2 + d_H/sqrt2 ; a_V -> (c_H - c_V)/2 + d_V/sqrt2
_A_H = [_unit(0, _HALF, 0), _unit(1, _HALF, 0), _unit(2, Fraction(1), 1)]
_A_V = [_unit(0, _HALF, 0), _unit(1, -_HALF, 0), _unit(3, Fraction(1), 1)]


def _check_scale(n: int) -> None:
    if n > ORACLE_MAX_N:
        raise DomainError(f"oracle refuses n={n}; the exact expansion is capped at n <= {ORACLE_MAX_N}")


def expand_pair_state(n: int, m: int, *, collected: bool = True) -> list[ModeMonomial]:
    """Herald-side expansion of the ``m``-th term of the n-pair state.

    Includes the ``1/((n-m)! m!)`` prefactor and the signal exponents
    ``b_H: m, b_V: n-m``.  The overall ``1/sqrt(n+1)`` is left out.

    Raises:
        DomainError: Outside ``0 <= m <= n <= ORACLE_MAX_N``.
    """
    if not 0 <= m <= n:
        raise DomainError(f"need 0 <= m <= n, got n={n}, m={m}")
    _check_scale(n)
    poly = [ModeMonomial((0, 0, 0, 0, m, n - m), Fraction(1, math.factorial(n - m) * math.factorial(m)))]
    for factor in [_A_H] * (n - m) + [_A_V] * m:
        poly = _multiply(poly, factor)
        if collected:
            poly = collect(poly)
    return poly


def rotate_signal(monomials: Iterable[ModeMonomial]) -> list[ModeMonomial]:
    """Substitute ``b_H -> (b_+ + b_-)/sqrt2`` and ``b_V -> (b_+ - b_-)/sqrt2``."""
    b_h = [_unit(4, Fraction(1), 1), _unit(5, Fraction(1), 1)]
    b_v = [_unit(4, Fraction(1), 1), _unit(5, Fraction(-1), 1)]
    out: list[ModeMonomial] = []
    for mono in monomials:
        *herald, n_h, n_v = mono.exponents
        poly = [ModeMonomial((*herald, 0, 0), mono.coefficient, mono.sqrt2_power)]
        for factor in [b_h] * n_h + [b_v] * n_v:
            poly = collect(_multiply(poly, factor))
        out.extend(poly)
    return collect(out)


def fock_probabilities(n: int, basis: str = "Z") -> dict[Exponents, Fraction]:
    """Exact probability of every six-mode Fock outcome of the n-pair state.

    In the Z basis the terms for different ``m`` never share a Fock state; in
    the X basis they interfere and are summed before squaring.
    """
    _check_scale(n)
    if basis not in ("Z", "X"):
        raise DomainError(f"unknown basis {basis!r}")
    terms = [mono for m in range(n + 1) for mono in expand_pair_state(n, m)]
    terms = collect(terms) if basis == "Z" else rotate_signal(terms)
    probs = {}
    for mono in terms:
        weight = math.prod(math.factorial(k) for k in mono.exponents)
        probs[mono.exponents] = mono.squared() * weight / (n + 1)
    return probs


def oracle_distribution(params: SourceParams, cls: HeraldClass, basis: str = "Z") -> SignalDistribution:
    """Signal distribution of ``cls`` rebuilt from the exact expansion."""
    _check_scale(params.n_cut)
    n_cut = params.n_cut
    table = np.zeros((n_cut + 1, n_cut + 1))
    for n in range(n_cut + 1):
        probs = fock_probabilities(n, basis)
        keys = list(probs)
        # detector order D_+, D_-, D_H, D_V matches the first four modes
        counts = np.array([k[:4] for k in keys], dtype=int).reshape(-1, 4)
        gamma = click_class_probs(counts, params.eta_h, params.dark)[cls.value]
        p_n = pair_number_prob(params, n)
        for key, g in zip(keys, gamma):
            table[key[4], key[5]] += p_n * g * float(probs[key])
    return SignalDistribution(table, params.tail, cls, basis, name=f"oracle:{cls.label}")


@dataclass(frozen=True)
class Discrepancy:
    herald: HeraldClass
    basis: str
    max_abs: float


def verify(params: SourceParams, bases: tuple[str, ...] = ("Z", "X")) -> list[Discrepancy]:
    """Largest elementwise gap between the main path and the oracle, per class."""
    rows = []
    for basis in bases:
        main = herald_distributions(params) if basis == "Z" else herald_distributions_x(params)
        for cls in ALL_CLASSES:
            ref = oracle_distribution(params, cls, basis)
            rows.append(Discrepancy(cls, basis, float(np.max(np.abs(main[cls].table - ref.table)))))
    return rows


def format_report(rows: list[Discrepancy]) -> str:
    lines = [f"{'class':<8}{'basis':<7}max_abs_diff"]
    lines += [f"{r.herald.label:<8}{r.basis:<7}{r.max_abs:.3e}" for r in rows]
    worst = max((r.max_abs for r in rows), default=0.0)
    lines.append(f"worst {worst:.3e}")
    return "\n".join(lines)
