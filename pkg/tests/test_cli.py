import json
import math

import pytest

from jointgibbs.cli import main, parse_box, prune_table, table_summary
from jointgibbs.errors import ConfigError
from jointgibbs.lattice import Box
from jointgibbs.model import make_rfim
from jointgibbs.potentials import (
    ConstantEntry,
    NormalizingMeasure,
    PotentialTable,
    relative_energy_table,
)
from jointgibbs.qkernel import QKernelContext


def write_config(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def report_from(capsys):
    return json.loads(capsys.readouterr().out)


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def test_parse_box():
    assert parse_box("2x3x3") == Box.from_shape(3, 3)
    assert parse_box("1x8") == Box.from_shape(8)
    for bad in ("3x3", "2x3", "axb", "12"):
        with pytest.raises(ConfigError):
            parse_box(bad)


def test_config_parse_error_is_usage_error(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"box": "1x4",')
    assert main(["check", "--config", str(path)]) == 2
    assert "parse error at line" in capsys.readouterr().err


def test_unsupported_config_version(tmp_path, capsys):
    path = write_config(tmp_path, "cfg.json", {"version": 99})
    assert main(["check", "--config", str(path)]) == 2
    assert "version" in capsys.readouterr().err


def test_monte_carlo_commands_demand_a_seed(capsys):
    assert main(["correlations", "--box", "1x6"]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["converge"]) == 2


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def test_check_passes_on_a_small_box(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(
        ["check", "--box", "2x2x2", "--seed", "0", "--tol", "1e-9",
         "--out", str(out)]
    )
    assert code == 0
    report = report_from(capsys)
    assert report["pass"] is True
    names = {s["name"] for s in report["sections"]}
    assert {"transform_roundtrip", "alpha_normalization", "martingale",
            "partial_sum", "reconstruction"} <= names
    assert any(n.startswith("ratio_") for n in names)
    assert all(s["pass"] for s in report["sections"])
    assert (out / "report.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "check"
    assert manifest["config"]["box"] == "2x2x2"
    assert "out" not in manifest["config"]


def test_check_with_fixed_boundary(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "cfg.json",
        {"box": "1x3", "bc": {"kind": "fixed", "fill": 1}, "trials": 20},
    )
    assert main(["check", "--config", cfg, "--seed", "1"]) == 0
    assert report_from(capsys)["boundary"] == "fixed"


def test_check_passes_trivially_without_disorder_coupling(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "cfg.json",
        {"model": {"model": "rfim", "J": 0.0, "h": 0.0}, "box": "1x3",
         "trials": 10},
    )
    assert main(["check", "--config", cfg, "--seed", "2"]) == 0
    report = report_from(capsys)
    assert all(s["max_abs_violation"] <= 1e-12 for s in report["sections"])


def test_check_flags_a_corrupted_table(tmp_path, capsys):
    ctx = QKernelContext(make_rfim(J=0.3, h=0.5), Box.from_shape(4))
    table = relative_energy_table(ctx, NormalizingMeasure.product(ctx.spec.nu))
    table.set([(1,)], ConstantEntry(0.321))  # deliberately wrong
    table_path = tmp_path / "table.json"
    with open(table_path, "w") as fp:
        table.dump(fp)
    cfg = write_config(
        tmp_path, "cfg.json",
        {"box": "1x4", "potential": str(table_path), "trials": 30},
    )
    assert main(["check", "--config", cfg, "--seed", "3"]) == 1
    report = report_from(capsys)
    assert report["pass"] is False
    bad = [s for s in report["sections"] if not s["pass"]]
    assert bad
    assert any("witness" in s for s in bad)


# ---------------------------------------------------------------------------
# potential
# ---------------------------------------------------------------------------


def test_potential_writes_table_and_summary(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["potential", "--box", "1x4", "--out", str(out)])
    assert code == 0
    with open(out / "table.json") as fp:
        table = PotentialTable.load(fp)
    assert len(table) == 2**4 - 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["entries"] == len(table)
    assert report_from(capsys)["summary"]["entries"] == len(table)


def test_potential_prunes_a_flat_model(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "cfg.json",
        {"model": {"model": "rfim", "J": 0.0, "h": 0.0}, "box": "1x3"},
    )
    assert main(["potential", "--config", cfg]) == 0
    assert report_from(capsys)["summary"]["entries"] == 0


def test_potential_mc_centering_requires_seed(tmp_path):
    cfg = write_config(
        tmp_path, "cfg.json",
        {"box": "1x3", "center": True, "center_mode": "mc"},
    )
    assert main(["potential", "--config", cfg]) == 2


def test_prune_and_summary_helpers():
    table = PotentialTable(Box.from_shape(3), alpha="product")
    table.set([(0,)], ConstantEntry(0.0))
    table.set([(1,)], ConstantEntry(0.5))
    table.set([(0,), (2,)], ConstantEntry(-0.25))
    kept = prune_table(table)
    assert len(kept) == 2
    summary = table_summary(kept)
    assert summary["entries"] == 2
    assert summary["by_diameter"]["0"]["count"] == 1
    assert summary["by_diameter"]["2"]["max_abs"] == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# converge
# ---------------------------------------------------------------------------


def test_converge_requires_growing_boxes(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "cfg.json", {"boxes": ["1x4", "1x4"], "seed": 1}
    )
    assert main(["converge", "--config", cfg]) == 2
    assert "strictly increasing" in capsys.readouterr().err


def test_converge_small_run(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = write_config(
        tmp_path, "cfg.json",
        {"boxes": ["1x3", "1x4"], "radii": [1, 2], "samples": 60},
    )
    assert main(["converge", "--config", cfg, "--seed", "4", "--out", str(out)]) == 0
    lines = (out / "converge.csv").read_text().strip().splitlines()
    assert lines[0] == "box,site,r,epsilon,stderr,samples,partial_sum"
    assert len(lines) == 1 + 2 * 2
    assert all(row.split(",")[0] in ("3", "4") for row in lines[1:])
    trend = json.loads((out / "trend.json").read_text())
    assert [t["box"] for t in trend] == ["3", "4"]
    assert all("non_increasing_within_2se" in t for t in trend)
    report = report_from(capsys)
    assert report["trend"] == trend


# ---------------------------------------------------------------------------
# correlations
# ---------------------------------------------------------------------------


def test_correlations_flat_for_decoupled_model(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = write_config(
        tmp_path, "cfg.json",
        {"model": {"model": "rfim", "J": 0.0, "h": 0.5}, "box": "1x6",
         "m_values": [1, 2], "samples": 40},
    )
    assert main(["correlations", "--config", cfg, "--seed", "5",
                 "--out", str(out)]) == 0
    report = report_from(capsys)
    assert all(v["value"] < 1e-12 for v in report["cbar"].values())
    assert report["fit"]["slope"] is None
    assert report["decay_budget"]["value"] >= report["decay_budget"]["c1"]
    lines = (out / "correlations.csv").read_text().strip().splitlines()
    assert lines[0] == "m,cbar,stderr,samples,eta_x,eta_y"
    assert len(lines) == 1 + 2 * 4  # four flip pairs per separation


# ---------------------------------------------------------------------------
# dilute-coeffs
# ---------------------------------------------------------------------------


def test_dilute_coeffs_closed_forms(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = write_config(tmp_path, "cfg.json", {"J": 0.8, "window": "2x2x2"})
    assert main(["dilute-coeffs", "--config", cfg, "--out", str(out)]) == 0
    with open(out / "table.json") as fp:
        table = PotentialTable.load(fp)
    pair_vals = [
        table.value(A) for A in table.support()
        if len(A) == 2 and A.diameter() == 1
    ]
    assert len(pair_vals) == 4
    assert all(v == pytest.approx(0.2907535603283936, abs=1e-12) for v in pair_vals)
    full = [A for A in table.support() if len(A) == 4]
    assert len(full) == 1
    assert table.value(full[0]) == pytest.approx(0.17767104750547213, abs=1e-12)
    assert len(table) == 5  # four bonds plus the plaquette survive pruning
    report = report_from(capsys)
    closed = report["summary"]["closed_forms"]
    assert closed["adjacent_pair_log_cosh_J"] == pytest.approx(math.log(math.cosh(0.8)))


def test_dilute_coeffs_window_cap(capsys):
    assert main(["dilute-coeffs", "--box", "2x4x4"]) == 2
    assert "too large" in capsys.readouterr().err