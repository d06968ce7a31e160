"""Command-line driver producing plot-ready CSV.

Configuration is resolved as flags over a flat ``key = value`` file over
built-in defaults.  The file comes from ``--config`` or, failing that, the
``PDCQKD_CONFIG`` environment variable.
"""

from __future__ import annotations

import argparse
import io
import logging
import math
import os
import sys
from typing import Any, Callable, Sequence

import numpy as np

from pdcqkd import __version__
from pdcqkd.channel import ChannelParams
from pdcqkd.decoy import SolverError
from pdcqkd.keyrate import ProtocolParams, optimal_wcp_baseline, optimize_lambda, total_rate
from pdcqkd.mathkit import DomainError, Tolerance
from pdcqkd.oracle import ORACLE_MAX_N, format_report, verify
from pdcqkd.simplex import NumericalError
from pdcqkd.source import ALL_CLASSES, HeraldClass, SourceParams, TruncationError, distributions_in_basis

log = logging.getLogger("pdcqkd")

CONFIG_ENV = "PDCQKD_CONFIG"
VERIFY_TOLERANCE = 1e-9
VERIFY_SOURCE_TOL = Tolerance(tail_eps=9.99e-4)

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    """Invalid configuration; reported with exit status 2."""


def _classes(text: str) -> tuple[HeraldClass, ...]:
    try:
        return tuple(HeraldClass.from_label(part.strip()) for part in text.split(",") if part.strip())
    except (KeyError, ValueError) as exc:
        raise UsageError(f"classes: cannot parse {text!r}") from exc


# key -> (parser, default); None means "unset"
_SETTINGS: dict[str, tuple[Callable[[str], Any], Any]] = {
    "lambda": (float, None),
    "lambda_min": (float, 1e-4),
    "lambda_max": (float, 0.3),
    "lambda_steps": (int, 40),
    "distance_min": (float, 0.0),
    "distance_max": (float, 250.0),
    "distance_step": (float, 10.0),
    "n_cut": (int, None),
    "eta_h": (float, 0.65),
    "eta_d": (float, 0.65),
    "dark": (float, 1e-6),
    "dark_b": (float, None),
    "e_d": (float, 0.015),
    "alpha": (float, 0.2),
    "q": (float, 0.5),
    "f": (float, 1.16),
    "pulse_rate": (float, 1e6),
    "classes": (_classes, None),
}
_DEFAULT_N_CUT = 10
_VERIFY_N_CUT = 4


def read_config(path: str) -> dict[str, Any]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"config: cannot read {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _SETTINGS:
            raise UsageError(f"config {path}:{lineno}: unknown or malformed entry {raw.strip()!r}")
        out[key] = _parse(key, value.strip())
    return out


def _parse(key: str, text: str) -> Any:
    parser, _ = _SETTINGS[key]
    try:
        return parser(text)
    except ValueError as exc:
        raise UsageError(f"{key}: invalid value {text!r}") from exc


def resolve(args: argparse.Namespace, environ: dict[str, str] | None = None) -> dict[str, Any]:
    """Merge defaults, the config file and explicit flags."""
    environ = os.environ if environ is None else environ
    cfg = {key: default for key, (_, default) in _SETTINGS.items()}
    path = args.config or environ.get(CONFIG_ENV)
    if path:
        cfg.update(read_config(path))
    for key in _SETTINGS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["n_cut"] is None:
        cfg["n_cut"] = _VERIFY_N_CUT if args.command == "verify" else _DEFAULT_N_CUT
    if cfg["dark_b"] is None:
        cfg["dark_b"] = cfg["dark"]
    if cfg["classes"] is None:
        cfg["classes"] = ProtocolParams().keygen_classes
    cfg["command"] = args.command
    return cfg


def distance_grid(cfg: dict[str, Any]) -> list[float]:
    lo, hi, step = cfg["distance_min"], cfg["distance_max"], cfg["distance_step"]
    if not (math.isfinite(lo) and math.isfinite(hi)) or step <= 0 or hi < lo or lo < 0:
        raise UsageError(
            f"distance grid is empty: min={lo!r}, max={hi!r}, step={step!r} "
            "(need 0 <= min <= max and step > 0)"
        )
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 9) for i in range(count)]


def lambda_grid(cfg: dict[str, Any]) -> list[float]:
    if cfg["lambda"] is not None:
        return [cfg["lambda"]]
    lo, hi, steps = cfg["lambda_min"], cfg["lambda_max"], cfg["lambda_steps"]
    if steps < 1 or not 0 < lo <= hi:
        raise UsageError(f"lambda grid is empty: min={lo!r}, max={hi!r}, steps={steps!r}")
    return [float(x) for x in np.geomspace(lo, hi, steps)]


def _source(cfg: dict[str, Any], lam: float) -> SourceParams:
    return SourceParams(lam, eta_h=cfg["eta_h"], dark=cfg["dark"], n_cut=cfg["n_cut"])


def _channel(cfg: dict[str, Any]) -> ChannelParams:
    return ChannelParams(0.0, cfg["alpha"], cfg["eta_d"], cfg["dark_b"], cfg["e_d"])


def _protocol(cfg: dict[str, Any]) -> ProtocolParams:
    return ProtocolParams(cfg["q"], cfg["f"], cfg["pulse_rate"], cfg["classes"])


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(c.label for c in value)
    return str(value)


def _header_block(cfg: dict[str, Any]) -> str:
    lines = [f"# pdcqkd {__version__} {cfg['command']}"]
    lines += [f"# {key} = {_fmt(cfg[key])}" for key in sorted(cfg) if key != "command"]
    return "\n".join(lines) + "\n"


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def cmd_sweep(cfg: dict[str, Any]) -> tuple[str, str]:
    distances = distance_grid(cfg)
    lambdas = lambda_grid(cfg)
    ch, p = _channel(cfg), _protocol(cfg)
    header = ["distance_km", "lambda", "per_pulse_rate", "heralded_rate", "throughput_bps"]
    for cls in p.keygen_classes:
        s = cls.slug
        header += [f"Q_{s}", f"E_{s}", f"p1y1_lower_{s}", f"e1_upper_{s}", f"R_{s}"]
    rows = []
    last_positive: dict[float, float | None] = {}
    for lam in lambdas:
        src = _source(cfg, lam)
        last_positive[lam] = None
        for dist in distances:
            pt = total_rate(src, ch.at(dist), p)
            row: list[Any] = [dist, lam, pt.per_pulse_rate, pt.heralded_rate, pt.throughput]
            for c in pt.classes:
                row += [c.gain, c.qber, c.p1y1_lower, c.e1_upper, c.rate]
            rows.append(row)
            if pt.per_pulse_rate > 0:
                last_positive[lam] = dist
    summary = "\n".join(
        f"lambda={lam!r}: last positive rate at "
        + ("none" if d is None else f"{d!r} km")
        for lam, d in last_positive.items()
    )
    return _csv(header, rows), summary


def cmd_optimize(cfg: dict[str, Any]) -> tuple[str, str]:
    distances = distance_grid(cfg)
    lo, hi = cfg["lambda_min"], cfg["lambda_max"]
    if not 0 < lo < hi <= 1:
        raise UsageError(f"lambda range invalid: min={lo!r}, max={hi!r}")
    ch, p = _channel(cfg), _protocol(cfg)
    rows = []
    for dist in distances:
        lam, pt = optimize_lambda(
            ch.at(dist),
            p,
            (lo, hi),
            eta_h=cfg["eta_h"],
            dark=cfg["dark"],
            n_cut=cfg["n_cut"],
            n_grid=cfg["lambda_steps"],
        )
        rows.append([dist, lam, pt.throughput, 2.0 * lam, pt.per_pulse_rate])
    header = ["distance_km", "lambda_opt", "throughput_bps", "two_lambda_opt", "per_pulse_rate"]
    return _csv(header, rows), f"{len(rows)} distances optimized"


def cmd_baseline(cfg: dict[str, Any]) -> tuple[str, str]:
    distances = distance_grid(cfg)
    ch, p = _channel(cfg), _protocol(cfg)
    rows = []
    for dist in distances:
        mu, rate = optimal_wcp_baseline(ch.at(dist), p)
        rows.append([dist, mu, rate, rate * p.pulse_rate])
    return _csv(["distance_km", "mu_opt", "rate_per_pulse", "throughput_bps"], rows), ""


def cmd_dists(cfg: dict[str, Any]) -> tuple[str, str]:
    rows = []
    for lam in lambda_grid(cfg):
        src = _source(cfg, lam)
        for basis in ("Z", "X"):
            dists = distributions_in_basis(src, basis)
            for cls in ALL_CLASSES:
                for m, k, prob in dists[cls].entries():
                    rows.append([lam, cls.label, basis, m, k, prob])
    return _csv(["lambda", "class", "basis", "m", "k", "prob"], rows), ""


def cmd_verify(cfg: dict[str, Any]) -> tuple[str, str]:
    if cfg["n_cut"] > ORACLE_MAX_N:
        raise UsageError(f"n_cut={cfg['n_cut']} exceeds the oracle limit {ORACLE_MAX_N}")
    lam = cfg["lambda"] if cfg["lambda"] is not None else 0.05
    # the comparison covers n <= n_cut only, so the discarded tail may be large
    src = SourceParams(
        lam, eta_h=cfg["eta_h"], dark=cfg["dark"], n_cut=cfg["n_cut"], tol=VERIFY_SOURCE_TOL
    )
    report = verify(src)
    worst = max(r.max_abs for r in report)
    rows = [[r.herald.label, r.basis, r.max_abs] for r in report]
    status = "PASS" if worst <= VERIFY_TOLERANCE else "FAIL"
    summary = format_report(report) + f"\n{status} (tolerance {VERIFY_TOLERANCE:g})"
    if status == "FAIL":
        raise _VerifyFailed(_csv(["class", "basis", "max_abs_diff"], rows), summary)
    return _csv(["class", "basis", "max_abs_diff"], rows), summary


class _VerifyFailed(Exception):
    def __init__(self, body: str, summary: str):
        super().__init__(summary)
        self.body, self.summary = body, summary


COMMANDS = {
    "sweep": (cmd_sweep, "key rate over a (lambda, distance) grid"),
    "optimize": (cmd_optimize, "throughput-optimal lambda per distance"),
    "baseline": (cmd_baseline, "active decoy BB84 reference with optimized mu"),
    "verify": (cmd_verify, "compare signal statistics against the exact oracle"),
    "dists": (cmd_dists, "dump herald-class photon-number tables"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    flag = common.add_argument
    flag("--config", help=f"flat key=value file (default: ${CONFIG_ENV})")
    flag("--out", help="output CSV path (default: stdout)")
    flag("--lambda", dest="lambda", type=float, help="single pair parameter")
    flag("--lambda-min", type=float)
    flag("--lambda-max", type=float)
    flag("--lambda-steps", type=int)
    flag("--distance-min", type=float, help="km")
    flag("--distance-max", type=float, help="km")
    flag("--distance-step", type=float, help="km")
    flag("--n-cut", type=int, help="photon-pair truncation order")
    flag("--eta-h", type=float, help="herald detector efficiency")
    flag("--eta-d", type=float, help="receiver detector efficiency")
    flag("--dark", type=float, help="dark-count probability (herald, and receiver unless --dark-b)")
    flag("--dark-b", type=float, help="receiver dark-count probability")
    flag("--e-d", type=float, help="misalignment error")
    flag("--alpha", type=float, help="fiber loss in dB/km")
    flag("--q", type=float, help="basis reconciliation factor")
    flag("--f", type=float, help="error-correction inefficiency")
    flag("--pulse-rate", type=float, help="Hz")
    flag("--classes", type=_classes, help="key-generating herald classes, e.g. H,V,+,-")
    flag("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pdcqkd", description="Heralded fully passive QKD simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve(args)
        body, summary = COMMANDS[args.command][0](cfg)
        status = EXIT_OK
    except _VerifyFailed as failed:
        body, summary, status = failed.body, failed.summary, EXIT_COMPUTE
    except (UsageError, DomainError) as exc:
        parser.exit(EXIT_USAGE, f"pdcqkd {args.command}: error: {exc}\n")
    except (TruncationError, SolverError, NumericalError) as exc:
        print(f"pdcqkd {args.command}: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    text = _header_block(cfg) + body
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if summary:
        print(summary, file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
