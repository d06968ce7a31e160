import csv
import io

import pytest

from pdcqkd import cli

SMALL_SWEEP = ["--lambda", "0.01", "--distance-max", "20", "--distance-step", "10"]


def run(argv, capsys):
    try:
        code = cli.main(argv)
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.reader(io.StringIO("\n".join(body))))


def comments(text):
    return {
        key.strip(): value.strip()
        for key, _, value in (line[2:].partition("=") for line in text.splitlines() if line.startswith("# "))
        if value
    }


def resolved(argv, environ=None):
    args = cli.build_parser().parse_args(argv)
    return cli.resolve(args, environ or {})


def test_defaults_follow_reference_parameters():
    cfg = resolved(["sweep"])
    assert (cfg["eta_h"], cfg["eta_d"], cfg["dark"], cfg["dark_b"]) == (0.65, 0.65, 1e-6, 1e-6)
    assert (cfg["e_d"], cfg["alpha"], cfg["q"], cfg["f"]) == (0.015, 0.2, 0.5, 1.16)
    assert cfg["n_cut"] == 10
    assert resolved(["verify"])["n_cut"] == 4


def test_flags_beat_file_beat_defaults(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# reference run\nf = 1.3\ne_d=0.02  # tuned\ndistance-step = 5\n")
    cfg = resolved(["sweep", "--config", str(conf), "--f", "1.05"])
    assert cfg["f"] == 1.05
    assert cfg["e_d"] == 0.02
    assert cfg["distance_step"] == 5.0
    assert cfg["alpha"] == 0.2


def test_environment_supplies_config(tmp_path):
    conf = tmp_path / "env.conf"
    conf.write_text("pulse_rate = 2e6\n")
    assert resolved(["sweep"], {cli.CONFIG_ENV: str(conf)})["pulse_rate"] == 2e6
    other = tmp_path / "flag.conf"
    other.write_text("pulse_rate = 5e5\n")
    cfg = resolved(["sweep", "--config", str(other)], {cli.CONFIG_ENV: str(conf)})
    assert cfg["pulse_rate"] == 5e5


def test_sweep_csv_layout(capsys):
    code, out, err = run(["sweep", *SMALL_SWEEP], capsys)
    assert code == 0
    rows = table(out)
    assert rows[0][:5] == ["distance_km", "lambda", "per_pulse_rate", "heralded_rate", "throughput_bps"]
    assert rows[0][5:10] == ["Q_H", "E_H", "p1y1_lower_H", "e1_upper_H", "R_H"]
    assert len(rows) == 4
    assert all(len(r) == len(rows[0]) for r in rows)
    assert [float(r[0]) for r in rows[1:]] == [0.0, 10.0, 20.0]
    assert all(float(r[2]) > 0 for r in rows[1:])
    recorded = comments(out)
    assert recorded["f"] == "1.16"
    assert recorded["n_cut"] == "10"
    assert recorded["classes"] == "H,V,+,-"
    assert "last positive rate at 20.0 km" in err


def test_sweep_is_byte_identical(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path in paths:
        assert run(["sweep", *SMALL_SWEEP, "--out", str(path)], capsys)[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_empty_distance_grid(capsys):
    code, _, err = run(["sweep", "--distance-min", "50", "--distance-max", "10"], capsys)
    assert code == 2
    assert "distance grid" in err


def test_bad_config_entry(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("wavelength = 1550\n")
    code, _, err = run(["sweep", "--config", str(conf)], capsys)
    assert code == 2
    assert "wavelength" in err


def test_invalid_parameter_named(capsys):
    code, _, err = run(["sweep", "--lambda", "0.01", "--eta-d", "1.5"], capsys)
    assert code == 2
    assert "eta_d" in err


def test_truncation_failure_is_computation_error(capsys):
    code, _, err = run(["sweep", "--lambda", "0.3", "--n-cut", "3", "--distance-max", "0"], capsys)
    assert code == 1
    assert "n_cut" in err


def test_verify_passes(capsys):
    code, out, err = run(["verify"], capsys)
    assert code == 0
    rows = table(out)
    assert rows[0] == ["class", "basis", "max_abs_diff"]
    assert len(rows) == 33
    assert max(float(r[2]) for r in rows[1:]) <= 1e-9
    assert "PASS" in err


def test_verify_refuses_large_cut(capsys):
    code, _, err = run(["verify", "--n-cut", "9"], capsys)
    assert code == 2
    assert "n_cut" in err


def test_baseline_rows(capsys):
    code, out, _ = run(["baseline", "--distance-max", "100", "--distance-step", "50"], capsys)
    assert code == 0
    rows = table(out)
    assert rows[0] == ["distance_km", "mu_opt", "rate_per_pulse", "throughput_bps"]
    rates = [float(r[2]) for r in rows[1:]]
    assert rates[0] > rates[1] > rates[2] > 0


def test_dists_dump(capsys):
    code, out, _ = run(["dists", "--lambda", "0.01", "--n-cut", "2", "--dark", "0"], capsys)
    # n_cut=2 leaves too much tail at the default tolerance
    assert code == 1
    code, out, _ = run(["dists", "--lambda", "0.0001", "--n-cut", "3"], capsys)
    assert code == 0
    rows = table(out)
    assert rows[0] == ["lambda", "class", "basis", "m", "k", "prob"]
    assert len(rows) - 1 == 2 * 16 * 10


@pytest.mark.slow
def test_optimize_rows(capsys):
    argv = ["optimize", "--distance-min", "100", "--distance-max", "100", "--lambda-steps", "12"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    (row,) = table(out)[1:]
    assert float(row[3]) == pytest.approx(2 * float(row[1]), rel=1e-15)
    assert float(row[2]) > 0
