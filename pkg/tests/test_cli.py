"""End-to-end runs of the command-line entry point."""

import json

import pandas as pd
import pytest

from catbond_pricing.config import RunConfig
from catbond_pricing.main import main
from tests.conftest import REFERENCE_CONFIG

A = 2e7


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    data = json.loads(REFERENCE_CONFIG.read_text())
    data["solver"]["n_steps"] = 200
    data["sim"]["n_paths"] = 2000
    path = tmp_path_factory.mktemp("config") / "small.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_config_round_trip(reference_config, tmp_path):
    """Reference config loads and survives a JSON round trip"""
    assert reference_config.model.lam == 0.01
    assert reference_config.solver.delta == 1e5
    assert reference_config.output.denominations == [1, 10, 100, 1000]
    path = tmp_path / "copy.json"
    path.write_text(reference_config.to_json())
    assert RunConfig.from_file(path) == reference_config
    assert '"lambda"' in reference_config.to_json()


def test_overrides_are_validated(reference_config):
    """Dotted overrides are applied and unknown keys raise"""
    changed = reference_config.with_overrides({"sim.seed": 7, "sim.n_paths": None})
    assert changed.sim.seed == 7
    assert changed.sim.n_paths == reference_config.sim.n_paths
    with pytest.raises(ValueError):
        reference_config.with_overrides({"nothing.here": 1})


def test_unknown_key_is_a_config_error(tmp_path, capsys):
    """Unknown config key exits with code 2 and names the key"""
    data = json.loads(REFERENCE_CONFIG.read_text())
    data["model"]["rate"] = 3
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert main(["price", "--config", str(path)]) == 2
    assert "model.rate" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    """Missing config file exits with code 2"""
    assert main(["price", "--config", str(tmp_path / "absent.json")]) == 2
    assert "not found" in capsys.readouterr().err


def test_invalid_model_values(tmp_path):
    """Atom probabilities that do not sum to one exit with code 2"""
    data = json.loads(REFERENCE_CONFIG.read_text())
    data["model"]["atoms"] = [[100000, 0.5], [200000, 0.4]]
    path = tmp_path / "probs.json"
    path.write_text(json.dumps(data))
    assert main(["price", "--config", str(path)]) == 2


def test_price_command(small_config, capsys):
    """Price command prints a consistent JSON record"""
    assert main(["price", "--config", small_config, "--c", "1.5e7", "--t", "0", "--k", "1"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["kappa"] == pytest.approx(1.1309e7, rel=1e-4)
    assert 0.0 <= record["buyer_price"] <= A
    assert record["buyer_below_seller"] is True
    assert [entry["N"] for entry in record["denominations"]] == [1, 10, 100, 1000]
    assert record["denominations"][0]["value"] == pytest.approx(record["certainty_equivalent"])
    assert record["tradability_gap"] == pytest.approx(record["buyer_price"] - record["risk_neutral"])
    assert 0.0 <= record["optimal_loading"] <= 2.0


def test_price_command_examples(small_config, capsys):
    """Price command above L and with zero quantity"""
    assert main(["price", "--config", small_config, "--c", "4e7", "--t", "0.1", "--k", "1"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["buyer_price"] == pytest.approx(A, rel=1e-8)
    assert record["risk_neutral"] == pytest.approx(A)

    assert main(["price", "--config", small_config, "--c", "1.5e7", "--k", "0"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["buyer_price"] == 0.0
    assert record["certainty_equivalent"] == 0.0
    assert record["optimal_loading"] == pytest.approx(1.0931, abs=5e-4)


def test_price_outside_horizon(small_config, capsys):
    """Time past T or negative level exits with code 2"""
    assert main(["price", "--config", small_config, "--t", "0.3"]) == 2
    assert "outside" in capsys.readouterr().err
    assert main(["price", "--config", small_config, "--c", "-1"]) == 2


def test_price_surface_csv_and_svg(small_config, tmp_path):
    """Surface command writes a full CSV grid and an SVG plot"""
    out, svg = tmp_path / "price.csv", tmp_path / "price.svg"
    assert main(["surface", "price", "--config", small_config, "--out", str(out), "--svg", str(svg)]) == 0
    assert out.read_text().splitlines()[0] == "c,t,value"
    frame = pd.read_csv(out)
    assert len(frame) == 101 * 301
    terminal = frame[frame.t == 0.25].set_index("c")["value"]
    assert terminal.loc[0.0] == 0.0
    assert terminal.loc[2e7] == pytest.approx(1e7)
    assert terminal.loc[3e7] == pytest.approx(A)
    assert frame.value.between(-1e-8 * A, A * (1 + 1e-8)).all()
    text = svg.read_text()
    assert "<svg" in text


def test_gap_and_loading_surfaces(small_config, tmp_path):
    """Gap and loading surfaces are written on the full grid"""
    gap = tmp_path / "gap.csv"
    assert main(["surface", "gap", "--config", small_config, "--out", str(gap)]) == 0
    assert (pd.read_csv(gap).value >= -1e-6 * A).all()

    loading = tmp_path / "loading.csv"
    assert main(["loading", "--config", small_config, "--out", str(loading)]) == 0
    frame = pd.read_csv(loading)
    assert list(frame.columns) == ["c", "t", "value"]
    assert len(frame) == 101 * 301
    assert frame.value.between(0.0, 2.0).all()


def test_surface_to_stdout(small_config, capsys):
    """Surface command without --out prints CSV to stdout"""
    assert main(["surface", "pi0", "--config", small_config]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "c,t,value"
    assert len(lines) == 1 + 101 * 301


def test_verify_single_path(small_config, tmp_path):
    """Verify with one path reports zero z-scores"""
    out = tmp_path / "verify.csv"
    assert main(["verify", "--config", small_config, "--paths", "1", "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["quantity", "estimate", "std_error", "analytic", "z_score"]
    assert len(frame) == 8
    assert frame.quantity.str.startswith("risk_neutral").sum() == 2
    assert (frame.z_score == 0.0).all()


def test_verify_is_deterministic(small_config, tmp_path):
    """Verify with a fixed seed writes identical files"""
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["verify", "--config", small_config, "--c", "1.5e7", "--k", "1", "--paths", "500", "--seed", "5"]
    assert main(args + ["--out", str(first)]) in (0, 1)
    assert main(args + ["--out", str(second)]) in (0, 1)
    assert first.read_bytes() == second.read_bytes()
    assert len(pd.read_csv(first)) == 4


def test_unwritable_output(small_config, tmp_path, capsys):
    """Unwritable output path exits with code 2"""
    target = tmp_path / "missing" / "price.csv"
    assert main(["surface", "pi0", "--config", small_config, "--out", str(target)]) == 2
    assert capsys.readouterr().err
