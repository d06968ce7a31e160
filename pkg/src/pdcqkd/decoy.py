"""Passive decoy-state bounds from the 16 herald classes.

Every herald class is a decoy source with its own photon-number table.  Two
linear programs bound the single-photon gain from below and the single-photon
error gain from above; the variables are the per-Fock-state yields ``Y[m, k]``
and error yields ``W[m, k] = e[m, k] * Y[m, k]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from pdcqkd.channel import ChannelParams, ClassStats, error_yield_table, yield_table
from pdcqkd.mathkit import DEFAULT_TOLERANCE, DomainError, Tolerance
from pdcqkd.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, LPResult, solve
from pdcqkd.source import ALL_CLASSES, HeraldClass, SignalDistribution

__all__ = [
    "DecoyBounds",
    "INFEASIBLE",
    "OPTIMAL",
    "UNBOUNDED",
    "LinearProgram",
    "build_error_lp",
    "build_yield_lp",
    "fock_states",
    "single_photon_bounds",
    "single_photon_truth",
    "solve",
]


class SolverError(RuntimeError):
    """A decoy LP did not reach an optimum."""


@dataclass(frozen=True)
class DecoyBounds:
    """Certified single-photon quantities of one target class.

    Attributes:
        p1y1_lower: Lower bound on ``P(1,0) Y[1,0] + P(0,1) Y[0,1]``.
        e1y1p1_upper: Upper bound on ``P(1,0) W[1,0] + P(0,1) W[0,1]``.
        e1_upper: Their ratio, capped at 1 (0 when the gain bound is 0).
        status: ``"optimal"`` when both programs solved.
    """

    p1y1_lower: float
    e1y1p1_upper: float
    e1_upper: float
    status: str


def fock_states(n_cut: int) -> list[tuple[int, int]]:
    """Decision-variable order: by total photon number, then ascending ``m``."""
    return [(m, n - m) for n in range(n_cut + 1) for m in range(n + 1)]


def _check_inputs(
    dists: Mapping[HeraldClass, SignalDistribution],
    stats: Mapping[HeraldClass, ClassStats],
    target: HeraldClass,
) -> int:
    missing = [c.label for c in ALL_CLASSES if c not in dists or c not in stats]
    if missing:
        raise DomainError(f"missing herald classes: {', '.join(missing)}")
    cuts = {d.n_cut for d in dists.values()}
    bases = {d.basis for d in dists.values()}
    if len(cuts) != 1:
        raise DomainError(f"distributions use different truncation orders: {sorted(cuts)}")
    if len(bases) != 1:
        raise DomainError("distributions are expressed in different bases")
    if target not in dists:
        raise DomainError(f"unknown target class {target!r}")
    return cuts.pop()


def _build(dists, observed, target, sense, prefix, rel_band) -> LinearProgram:
    n_cut = next(iter(dists.values())).n_cut
    states = fock_states(n_cut)
    names = tuple(f"{prefix}_{m}_{k}" for m, k in states)
    rows, rels, rhs = [], [], []
    for cls in ALL_CLASSES:
        dist = dists[cls]
        coeffs = np.array([dist.table[m, k] for m, k in states])
        # observed = sum_{n <= n_cut} P Y + (mass beyond n_cut, at most the tail);
        # the relative band absorbs rounding in the observed statistic
        band = rel_band * abs(observed[cls])
        rows.append(coeffs)
        rels.append("<=")
        rhs.append(observed[cls] + band)
        rows.append(coeffs)
        rels.append(">=")
        rhs.append(observed[cls] - band - dist.tail)
    objective = np.zeros(len(states))
    objective[states.index((1, 0))] = dists[target].table[1, 0]
    objective[states.index((0, 1))] = dists[target].table[0, 1]
    bounds = np.tile([0.0, 1.0], (len(states), 1))
    return LinearProgram(objective, sense, np.array(rows), tuple(rels), np.array(rhs), bounds, names)


def build_yield_lp(
    dists: Mapping[HeraldClass, SignalDistribution],
    stats: Mapping[HeraldClass, ClassStats],
    target: HeraldClass,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> LinearProgram:
    """Minimize the target's single-photon gain over yields consistent with all gains.

    Each class contributes ``sum P_x Y <= Q_x`` and ``sum P_x Y >= Q_x - tail``,
    both widened by ``tol.rel_eps * Q_x``.
    """
    _check_inputs(dists, stats, target)
    gains = {c: stats[c].gain for c in ALL_CLASSES}
    return _build(dists, gains, target, "min", "Y", tol.rel_eps)


def build_error_lp(
    dists: Mapping[HeraldClass, SignalDistribution],
    stats: Mapping[HeraldClass, ClassStats],
    target: HeraldClass,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> LinearProgram:
    """Maximize the target's single-photon error gain.

    ``stats`` must count errors against the target's nominal polarization for
    every class, so that one error-yield variable per Fock state is shared.
    """
    _check_inputs(dists, stats, target)
    error_gains = {c: stats[c].error_gain for c in ALL_CLASSES}
    return _build(dists, error_gains, target, "max", "W", tol.rel_eps)


def single_photon_bounds(
    dists: Mapping[HeraldClass, SignalDistribution],
    stats: Mapping[HeraldClass, ClassStats],
    target: HeraldClass,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> DecoyBounds:
    """Run both decoy programs for ``target``."""
    results: list[LPResult] = []
    for build in (build_yield_lp, build_error_lp):
        result = solve(build(dists, stats, target, tol))
        if result.status == UNBOUNDED:
            # every variable is boxed; reaching here means a malformed program
            raise AssertionError(f"decoy LP for class {target.label} reported unbounded")
        results.append(result)
    gain_res, err_res = results
    if gain_res.status != OPTIMAL or err_res.status != OPTIMAL:
        return DecoyBounds(0.0, 0.0, 0.0, INFEASIBLE)
    # step back by the duality gap so a near-optimal stop stays on the safe side
    p1y1 = max(gain_res.value - gain_res.gap, 0.0)
    w1 = max(err_res.value + err_res.gap, 0.0)
    e1 = min(w1 / p1y1, 1.0) if p1y1 > 0 else 0.0
    return DecoyBounds(p1y1, w1, e1, OPTIMAL)


def single_photon_truth(dist: SignalDistribution, ch: ChannelParams, nominal: str) -> tuple[float, float]:
    """Forward-model ``(P1Y1, e1)`` of a class; the quantities the LPs bound."""
    y = yield_table(dist.n_cut, ch)
    w = error_yield_table(dist.n_cut, ch, nominal)
    p1y1 = dist.table[1, 0] * y[1, 0] + dist.table[0, 1] * y[0, 1]
    w1 = dist.table[1, 0] * w[1, 0] + dist.table[0, 1] * w[0, 1]
    return float(p1y1), float(w1 / p1y1) if p1y1 > 0 else 0.0
