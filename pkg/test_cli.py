import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from errors import ConfigError
from main import cli
from mesh_io import import_mesh
from schemas import build_config, load_config, parse_override
from table_utils import get_shaped_table, read_table, write_table


# ============================================================
# Helpers
# ============================================================

_BASIN = {"geometry": {"kind": "basin", "L": 2.0, "h": 1.0, "nx": 4, "nz": 2}}

_BASIN_TOML = """
[geometry]
kind = "basin"
L = 2.0
h = 1.0
nx = 4
nz = 2
"""


def _config_file(tmp_path, text: str = _BASIN_TOML, name: str = "run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# ============================================================
# Configuration
# ============================================================

def test_minimal_config_uses_defaults():
    config = build_config(_BASIN)
    assert config.geometry.kind == "basin"
    assert config.discretization.P == 4
    assert config.discretization.Cr == 0.5
    assert config.impulse.mode == 3
    assert config.discretization.dtn_recovery == "weak"
    assert config.study.stability_tolerance == 1e-8
    assert config.absorption.relaxation and config.absorption.sommerfeld


def test_unknown_key_reports_its_path():
    with pytest.raises(ConfigError) as info:
        build_config({**_BASIN, "discretization": {"Q": 3}})
    assert "discretization.Q" in info.value.key_paths


def test_missing_geometry_is_reported():
    with pytest.raises(ConfigError) as info:
        build_config({})
    assert "geometry" in info.value.key_paths


def test_overrides_patch_values():
    config = build_config(_BASIN, ["discretization.P=6", "discretization.dtn_recovery=average",
                                   "study.orders=[2, 3]"])
    assert config.discretization.P == 6
    assert config.discretization.dtn_recovery == "average"
    assert config.study.orders == [2, 3]
    assert parse_override("impulse.alpha = 2.5") == (["impulse", "alpha"], 2.5)
    with pytest.raises(ConfigError):
        parse_override("impulse.alpha")


def test_order_out_of_range():
    with pytest.raises(ConfigError) as info:
        build_config(_BASIN, ["discretization.P=0"])
    assert "discretization.P" in info.value.key_paths


def test_grading_only_turns_absorbers_off():
    config = build_config({**_BASIN, "absorption": {"grading_only": True}})
    assert not config.absorption.relaxation
    assert not config.absorption.sommerfeld


def test_json_config_with_dotted_keys(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({**_BASIN, "impulse.alpha": 5.0, "output.monitors": [0.5]}), encoding="utf-8")
    config = load_config(path)
    assert config.impulse.alpha == 5.0
    assert config.output.monitors == [0.5]


def test_toml_sections(tmp_path):
    config = load_config(_config_file(tmp_path, _BASIN_TOML + '\n[impulse]\nmode = 1\n'))
    assert config.impulse.mode == 1


def test_unparseable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_config_file(tmp_path, "[geometry\nkind = 1"))


# ============================================================
# Tables
# ============================================================

def test_table_metadata_and_determinism(tmp_path):
    frame = pd.DataFrame({"omega [rad/s]": [0.5, 1.0], "a_33 [kg/m]": [1 / 3, 2.0]})
    first = write_table(frame, tmp_path / "a.csv", {"mesh": "basin", "P": 4, "dt": 0.1})
    second = write_table(frame, tmp_path / "b.csv", {"mesh": "basin", "P": 4, "dt": 0.1})
    assert first.read_bytes() == second.read_bytes()
    back, meta = read_table(first)
    assert meta == {"mesh": "basin", "P": "4", "dt": "0.1"}
    assert list(back.columns) == list(frame.columns)
    np.testing.assert_array_equal(back.to_numpy(), frame.to_numpy())


def test_shaped_table_column_selection(caplog):
    frame = pd.DataFrame({"t [s]": [0.0], "x [m]": [1.0], "F_33 [N/m]": [2.0]})
    assert list(get_shaped_table(frame, include_columns=["F_33 [N/m]", "t [s]"]).columns) == ["F_33 [N/m]", "t [s]"]
    assert list(get_shaped_table(frame, exclude_columns=["x [m]"]).columns) == ["t [s]", "F_33 [N/m]"]
    get_shaped_table(frame, include_columns=["eta [m]"])
    assert "not in the table" in caplog.text


# ============================================================
# Command line
# ============================================================

def test_meshgen_writes_mesh_and_summary(tmp_path):
    out = tmp_path / "out"
    result = CliRunner().invoke(cli, ["meshgen", "--config", str(_config_file(tmp_path)), "--out", str(out)])
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "run.json").read_text(encoding="utf-8"))
    assert summary["status"] == "ok"
    assert summary["command"] == "meshgen"
    assert import_mesh(out / "mesh.msh").n_elements == 2 * 4 * 2
    assert (out / "run.log.jsonl").exists()


def test_bad_config_exits_with_config_code(tmp_path):
    path = _config_file(tmp_path, _BASIN_TOML + "\n[discretization]\nQ = 3\n")
    result = CliRunner().invoke(cli, ["meshgen", "--config", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "discretization.Q" in result.output


def test_numerical_failure_exits_with_numerical_code(tmp_path):
    result = CliRunner().invoke(cli, ["stability", "--config", str(_config_file(tmp_path)),
                                      "--out", str(tmp_path / "out"),
                                      "--override", "study.orders=[2]", "--override", "study.max_eigen_dim=4"])
    assert result.exit_code == 3


def test_basin_stability_command(tmp_path):
    out = tmp_path / "out"
    result = CliRunner().invoke(cli, ["stability", "--config", str(_config_file(tmp_path)), "--out", str(out),
                                      "--override", "study.orders=[2, 3]"])
    assert result.exit_code == 0, result.output
    table, meta = read_table(out / "stability.csv")
    assert list(table["P [-]"]) == [2, 3]
    assert table["stable [-]"].all()
    assert (table["zero_modes [-]"] == 2).all()
    assert meta["dtn_recovery"] == "weak"
    assert json.loads((out / "run.json").read_text(encoding="utf-8"))["results"]["unstable_orders"] == []


_CYLINDER_TOML = """
[geometry]
kind = "cylinder"
R = 0.5
h = 1.0
L = 3.0
beta = 3
grading = 1.2

[discretization]
P = 2

[impulse]
extend_to_decay = false

[output]
progress_every = 0
"""


def _invoke(command: str, config_path, out, *overrides):
    args = [command, "--config", str(config_path), "--out", str(out)]
    for override in overrides:
        args += ["--override", override]
    result = CliRunner().invoke(cli, args)
    assert result.exit_code == 0, result.output
    return json.loads((out / "run.json").read_text(encoding="utf-8"))


def test_radiate_tables_are_byte_identical(tmp_path):
    path = _config_file(tmp_path, _CYLINDER_TOML)
    first = _invoke("radiate", path, tmp_path / "first")
    _invoke("radiate", path, tmp_path / "second")
    for name in ("signals.csv", "coefficients.csv"):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()
    assert first["results"]["cross_coupling"] == {"1": 0.0, "5": 0.0}
    assert first["timings"]["mean_solve_seconds"] > 0


def test_full_domain_radiate_reports_cross_coupling(tmp_path):
    summary = _invoke("radiate", _config_file(tmp_path, _CYLINDER_TOML), tmp_path / "out",
                      "geometry.full_domain=true")
    assert summary["mesh"].endswith("-full")
    coupling = summary["results"]["cross_coupling"]
    assert set(coupling) == {"1", "5"}
    assert max(coupling.values()) < 1e-8


def test_mms_command(tmp_path):
    text = _CYLINDER_TOML.replace("R = 0.5\nh = 1.0", "R = 1.0\nh = 2.5").replace("grading = 1.2\n", "")
    path = _config_file(tmp_path, text)
    out = tmp_path / "out"
    summary = _invoke("mms", path, out, "study.levels=[3, 4]", "study.orders=[1, 2, 3]")
    cases, meta = read_table(out / "convergence.csv")
    assert len(cases) == 6
    assert cases["mesh [-]"].str.endswith("beta=4)").sum() == 3
    assert meta["curved"] == "1"
    assert set(summary["results"]["h_rates"]) == {"1", "2", "3"}
    assert len(summary["results"]["p_decay"]) == 2
    assert all(0 < d < 1 for d in summary["results"]["p_decay"].values())
    rates, _ = read_table(out / "rates.csv")
    assert set(rates["kind"]) == {"h", "P"}


def test_scaling_command(tmp_path):
    out = tmp_path / "out"
    summary = _invoke("scaling", _config_file(tmp_path), out, "study.levels=[4, 8]", "study.orders=[1, 2]",
                      "study.repeats=2")
    table, meta = read_table(out / "scaling.csv")
    assert len(table) == 4
    assert (table["solve [s]"] > 0).all()
    assert list(table["N_dof [-]"]) == sorted(table["N_dof [-]"])
    assert meta["repeats"] == "2"
    assert np.isfinite(summary["results"]["exponent"])


def test_spurious_alpha_command(tmp_path):
    out = tmp_path / "out"
    summary = _invoke("spurious", _config_file(tmp_path, _CYLINDER_TOML), out, "study.alphas=[3.0, 5.0]")
    table, meta = read_table(out / "study.csv")
    assert list(table["alpha"]) == [3.0, 5.0]
    assert table["stable"].all()
    assert meta["study"] == "alpha"
    assert (out / "spectra.csv").exists()
    assert summary["results"]["unstable"] == []
    assert set(summary["results"]["coefficient_rms_vs_alpha3"]) == {"5.0"}
