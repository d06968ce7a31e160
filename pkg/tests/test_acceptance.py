"""Acceptance criteria; each test records one PASS/FAIL line for the summary."""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from pdcqkd import cli
from pdcqkd.channel import ChannelParams, class_stats, error_yield_table, yield_table
from pdcqkd.decoy import build_error_lp, build_yield_lp, fock_states, single_photon_bounds, single_photon_truth
from pdcqkd.keyrate import (
    ProtocolParams,
    max_distance,
    optimal_wcp_baseline,
    optimize_lambda,
    total_rate,
)
from pdcqkd.mathkit import Tolerance
from pdcqkd.oracle import verify
from pdcqkd.source import (
    ALL_CLASSES,
    KEYGEN_CLASSES,
    HeraldClass,
    SourceParams,
    amplitude_block,
    distributions_in_basis,
)

# first verified run of optimize_lambda on the reference parameters
FROZEN_TWO_LAMBDA = {0: 0.43582, 50: 0.20884, 100: 0.19685, 150: 0.19292, 200: 0.16782}
P = ProtocolParams()


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert ok, line


def test_01_oracle_equivalence():
    start = time.perf_counter()
    worst = 0.0
    # n_cut=4 leaves up to 7e-4 of pair mass at lambda=0.2; the comparison is below the cut
    tol = Tolerance(tail_eps=9e-4)
    for lam, eta_h, dark in itertools.product((0.01, 0.05, 0.2), (0.65, 1.0), (0.0, 1e-6)):
        rows = verify(SourceParams(lam, eta_h=eta_h, dark=dark, n_cut=4, tol=tol))
        assert len(rows) == 2 * len(ALL_CLASSES)
        worst = max(worst, max(r.max_abs for r in rows))
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-9 and elapsed < 60, f"max |P - oracle| = {worst:.2e} (<= 1e-9), {elapsed:.1f} s (< 60 s)")


def test_02_partition_of_unity():
    worst = 0.0
    for lam in (1e-4, 0.001, 0.01, 0.05, 0.1):
        src = SourceParams(lam, n_cut=10)
        for basis in ("Z", "X"):
            dists = distributions_in_basis(src, basis)
            total = sum(float(d.table.sum()) for d in dists.values()) + src.tail
            worst = max(worst, abs(total - 1.0))
    record(2, worst <= 1e-10, f"max |sum - 1| = {worst:.2e} (<= 1e-10)")


def test_03_per_n_unitarity():
    worst = max(abs(float(np.sum(amplitude_block(n)[1] ** 2)) - 1.0) for n in range(11))
    record(3, worst <= 1e-10, f"max |sum A^2 - 1| over n <= 10 = {worst:.2e} (<= 1e-10)")


def test_04_bell_heralding_limit():
    src = SourceParams(1e-4, eta_h=1.0, dark=0.0)
    expected = {HeraldClass.H: (0, 1), HeraldClass.V: (1, 0), HeraldClass.PLUS: (1, 0), HeraldClass.MINUS: (0, 1)}
    weights = {}
    for cls, cell in expected.items():
        dist = distributions_in_basis(src, cls.basis)[cls]
        weights[cls.label] = float(dist.normalized()[cell])
    low = min(weights.values())
    detail = ", ".join(f"{k}: {v:.6f}" for k, v in weights.items())
    record(4, low >= 0.999, f"single-photon weight {detail} (>= 0.999)")


def test_05_lp_soundness():
    rng = np.random.default_rng(20240501)
    failures = []
    for _ in range(20):
        lam = float(10 ** rng.uniform(-3, -1))
        src = SourceParams(lam, eta_h=float(rng.uniform(0.4, 1.0)), dark=float(10 ** rng.uniform(-7, -5)))
        ch = ChannelParams(
            float(rng.uniform(0, 200)), dark=float(10 ** rng.uniform(-7, -5)), e_d=float(rng.uniform(0, 0.03))
        )
        cls = KEYGEN_CLASSES[int(rng.integers(4))]
        dists = distributions_in_basis(src, cls.basis)
        stats = {c: class_stats(dists[c], ch, cls.nominal) for c in ALL_CLASSES}
        states = tuple(zip(*fock_states(src.n_cut)))
        y = yield_table(src.n_cut, ch)[states]
        w = error_yield_table(src.n_cut, ch, cls.nominal)[states]
        for prog, x in ((build_yield_lp(dists, stats, cls), y), (build_error_lp(dists, stats, cls), w)):
            act = prog.A @ x
            le = np.array([r == "<=" for r in prog.relations])
            if np.any(np.where(le, act - prog.b, prog.b - act) > 0.0):
                failures.append(f"infeasible truth at lambda={lam:.3g}, L={ch.distance:.0f}")
        bounds = single_photon_bounds(dists, stats, cls)
        p1y1, e1 = single_photon_truth(dists[cls], ch, cls.nominal)
        if not (bounds.p1y1_lower <= p1y1 and bounds.e1_upper >= e1):
            failures.append(f"bound violated at lambda={lam:.3g}, L={ch.distance:.0f}")
    record(5, not failures, f"20 random points, {len(failures)} violations" + (f": {failures[0]}" if failures else ""))


def test_06_maximum_distance():
    start = time.perf_counter()
    reach = max_distance(SourceParams(0.001), ProtocolParams(f=1.16), ChannelParams())
    elapsed = time.perf_counter() - start
    record(6, abs(reach - 241.0) <= 10.0 and elapsed < 600, f"max distance {reach:.1f} km (241 +/- 10), {elapsed:.1f} s")


def test_07_key_rate_ratio():
    src = SourceParams(0.001)
    ratios = {}
    for distance in (10.0, 50.0, 100.0):
        ch = ChannelParams(distance)
        _, wcp = optimal_wcp_baseline(ch, P)
        ratios[distance] = total_rate(src, ch, P).heralded_rate / wcp
    detail = ", ".join(f"{d:.0f} km: {r:.2f}" for d, r in ratios.items())
    record(7, min(ratios.values()) >= 3.0, f"heralded rate / optimal WCP rate {detail} (>= 3)")


def test_08_lambda_ordering():
    lams = (0.001, 0.01, 0.05, 0.1)
    reach = [max_distance(SourceParams(lam), P, ChannelParams()) for lam in lams]
    ordered = all(a >= b for a, b in zip(reach, reach[1:]))
    worst = 0.0
    for distance in range(0, 160, 10):
        ch = ChannelParams(float(distance))
        a = total_rate(SourceParams(0.001), ch, P).heralded_rate
        b = total_rate(SourceParams(0.01), ch, P).heralded_rate
        worst = max(worst, abs(a - b) / max(a, b))
    reach_text = " >= ".join(f"{r:.1f}" for r in reach)
    record(
        8,
        ordered and worst <= 0.05,
        f"max distance {reach_text} km; lambda 0.001 vs 0.01 heralded-rate gap {100 * worst:.2f}% (<= 5%)",
    )


def test_09_throughput_optimization():
    two_lam, throughput = {}, []
    for distance in FROZEN_TWO_LAMBDA:
        lam, point = optimize_lambda(ChannelParams(float(distance)), P)
        two_lam[distance] = 2.0 * lam
        throughput.append(point.throughput)
    values = list(two_lam.values())
    sane = all(math.isfinite(v) and v > 0 for v in values) and min(throughput) > 0
    monotone = all(b <= a for a, b in zip(values, values[1:]))
    frozen = all(two_lam[d] == pytest.approx(v, rel=2e-3) for d, v in FROZEN_TWO_LAMBDA.items())
    detail = ", ".join(f"{d} km: {v:.4f}" for d, v in two_lam.items())
    record(9, sane and monotone and frozen, f"2*lambda* {detail} (nonincreasing, matches frozen curve)")


def test_10_determinism(tmp_path):
    outputs = []
    for name in ("first.csv", "second.csv"):
        path = tmp_path / name
        assert cli.main(["sweep", "--lambda", "0.001", "--out", str(path)]) == 0
        outputs.append(path.read_bytes())
    same = outputs[0] == outputs[1]
    rows = sum(1 for line in outputs[0].splitlines() if line and not line.startswith(b"#")) - 1
    record(10, same and rows == 26, f"two sweep runs ({rows} rows) byte-identical: {same}")
