"""Configuration loading, result tables and the command-line front end."""
import math

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from cavity_purification.cli import main, run
from cavity_purification.config import (
    DEFAULTS,
    ConfigError,
    config_hash,
    dump_config,
    load_config,
    normalize_units,
    parse_override,
)
from cavity_purification.tables import ResultTable, format_value, read_csv, reproducible_timestamp


@pytest.fixture(autouse=True)
def _no_epoch(monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg == DEFAULTS
        assert cfg is not DEFAULTS

    def test_precedence(self, tmp_path):
        path = write_yaml(tmp_path / "c.yaml", {"seed": 3, "effective": {"g_eff": 0.5}})
        cfg = load_config(path, ["effective.g_eff=0.7", "seed=4"], seed=9)
        assert cfg["effective"]["g_eff"] == 0.7
        assert cfg["effective"]["kappa"] == 1.0
        assert cfg["seed"] == 9

    @pytest.mark.parametrize("bad", [{"efective": {}}, {"effective": {"g": 1}},
                                     {"protocol": {"detector": {"eta": 1}}}, {"units": {"gamma": 1}},
                                     {"effective": 3}, {"experiment": "fit"}])
    def test_unknown_keys_rejected(self, tmp_path, bad):
        with pytest.raises(ConfigError):
            load_config(write_yaml(tmp_path / "c.yaml", bad))

    def test_override_parsing(self):
        assert parse_override("a.b=[1, 2]") == {"a": {"b": [1, 2]}}
        assert parse_override("x=null") == {"x": None}
        for bad in ("novalue", "a..b=1", "a=[1"):
            with pytest.raises(ConfigError):
                parse_override(bad)

    def test_detector_defaults_filled(self):
        cfg = load_config(overrides=["protocol.detector={efficiency: 0.5}"])
        assert cfg["protocol"]["detector"] == {"efficiency": 0.5, "dark_count_rate": 0.0,
                                               "observation_window": 5.0}

    def test_dump_roundtrip(self, tmp_path):
        cfg = load_config(overrides=["effective.coupling_signs=[1, -1]", "protocol.mode=timed",
                                     "protocol.tau=2.0"])
        path = tmp_path / "r.yaml"
        path.write_text(dump_config(cfg), encoding="utf-8")
        assert load_config(str(path)) == cfg

    def test_hash_ignores_output_dir(self):
        a = load_config(output_dir="x")
        b = load_config(output_dir="y")
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(load_config(overrides=["effective.g_eff=0.9"]))

    @settings(max_examples=30, deadline=None)
    @given(g=st.floats(0.01, 5.0), k=st.sampled_from([0.125, 0.5, 2.0, 4.0, 16.0]))
    def test_unit_scaling_is_hash_invariant(self, g, k):
        # powers of two keep the rescaling exact
        scaled = load_config(overrides=[f"effective.g_eff={g!r}", "protocol.mode=timed", "protocol.tau=2.0"])
        physical = load_config(overrides=[
            f"units={{kappa: {k!r}}}", f"effective.kappa={k!r}", f"effective.g_eff={g * k!r}",
            "protocol.mode=timed", f"protocol.tau={2.0 / k!r}", f"integrator.max_time={50.0 / k!r}",
            f"integrator.check_every={1.0 / k!r}", f"evolve.t_final={2.0 / k!r}"])
        assert normalize_units(physical) == scaled
        assert config_hash(physical) == config_hash(scaled)

    def test_bad_units(self):
        with pytest.raises(ConfigError):
            normalize_units(load_config(overrides=["units={kappa: 0}"]))


class TestTables:
    def test_format(self):
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value(True) == "true"
        assert format_value(None) == "nan"
        assert format_value(float("nan")) == "nan"
        assert format_value(7) == "7"
        assert float(format_value(math.pi)) == math.pi

    def test_column_count_enforced(self):
        t = ResultTable([("a", ""), ("b", "s")])
        with pytest.raises(ValueError):
            t.add(1.0)
        with pytest.raises(ValueError):
            t.add_dict({"a": 1})

    def test_csv_layout(self):
        t = ResultTable([("t", "1/kappa"), ("p", "")], metadata={"experiment": "x", "seed": 1})
        t.add(0.5, True)
        text = t.to_csv()
        assert "\r" not in text
        lines = text.split("\n")
        assert lines[:3] == ["# experiment: x", "# seed: 1", "# units: 1/kappa,-"]
        assert lines[3:5] == ["t,p", "0.5,true"]
        meta, header, rows = read_csv(text)
        assert meta["seed"] == "1" and header == ["t", "p"] and rows == [["0.5", "true"]]

    def test_timestamp(self, monkeypatch):
        assert reproducible_timestamp() == "unset"
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
        assert reproducible_timestamp() == "1970-01-01T00:00:00Z"


class TestRun:
    def test_evolve_decay_reference(self):
        t = run(load_config(experiment="evolve", overrides=["evolve.mode=decay", "evolve.n_samples=5"]))
        for n, ref in zip(t.column("mean_photons"), t.column("decay_reference")):
            assert n == pytest.approx(ref, abs=1e-9)

    def test_evolve_unitary_closed_form(self):
        t = run(load_config(experiment="evolve", overrides=["evolve.n_samples=4"]))
        assert min(t.column("closed_form_fidelity")) > 1 - 1e-9
        assert t.metadata["reproduces"]

    def test_purify_timed(self):
        t = run(load_config(overrides=["protocol.mode=timed", "protocol.tau=2.0", "protocol.rounds=2"]))
        f = t.column("fidelity_numeric")
        assert f[0] < f[1]
        assert t.column("fidelity_closed_form")[0] == pytest.approx(1 / (1 + 2 * math.exp(-4)))
        assert all(math.isnan(x) for x in t.column("no_click_coherent_sampled"))

    def test_purify_detector_columns(self):
        t = run(load_config(seed=2, overrides=["protocol.mode=timed", "protocol.tau=2.0", "protocol.rounds=1",
                                               "protocol.detector={efficiency: 0.5}"]))
        sampled, closed = t.column("no_click_coherent_sampled")[0], t.column("no_click_coherent_closed_form")[0]
        assert abs(sampled - closed) < 4 * math.sqrt(closed * (1 - closed) / 10000)

    def test_physical_units_give_same_numbers(self):
        a = run(load_config(overrides=["protocol.mode=timed", "protocol.tau=2.0", "protocol.rounds=1"]))
        b = run(load_config(overrides=["units={kappa: 4.0}", "effective.kappa=4.0", "effective.g_eff=4.0",
                                       "protocol.mode=timed", "protocol.tau=0.5", "protocol.rounds=1"]))
        assert a.column("fidelity_numeric") == pytest.approx(b.column("fidelity_numeric"), abs=1e-12)


class TestMain:
    def test_writes_table_and_config(self, tmp_path, capsys):
        out = tmp_path / "o"
        code = main(["bell-surface", "--out", str(out), "--set", "bell_surface.numeric=null"])
        assert code == 0
        meta, header, rows = read_csv(str(out / "bell-surface.csv"))
        assert meta["experiment"] == "bell-surface"
        assert len(meta["config_hash"]) == 16
        assert header[0] == "kind"
        assert {r[0] for r in rows} == {"grid", "contour_closed", "contour_oracle"}
        saved = load_config(str(out / "bell-surface.config.yaml"))
        assert saved["bell_surface"]["numeric"] is None
        assert str(out / "bell-surface.csv") in capsys.readouterr().out

    def test_byte_identical_reruns(self, tmp_path):
        args = ["purify", "--seed", "5", "--set", "protocol.mode=timed", "--set", "protocol.tau=2.0",
                "--set", "protocol.detector={efficiency: 0.9}"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "purify.csv").read_bytes() == (tmp_path / "b" / "purify.csv").read_bytes()

    def test_unknown_key_exit_code(self, tmp_path, capsys):
        assert main(["purify", "--out", str(tmp_path), "--set", "effective.gee=1"]) == 2
        assert "unknown configuration key" in capsys.readouterr().err
        assert not list(tmp_path.iterdir())

    def test_invalid_value_exit_code(self, tmp_path):
        assert main(["purify", "--out", str(tmp_path), "--set", "protocol.mode=pulsed"]) == 2
        assert main(["evolve", "--out", str(tmp_path), "--set", "evolve.mode=other"]) == 2

    def test_numerical_failure_exit_code(self, tmp_path):
        code = main(["purify", "--out", str(tmp_path), "--set", "protocol.rounds=1",
                     "--set", "integrator.max_time=0.5", "--set", "integrator.check_every=0.5"])
        assert code == 3
        _, _, rows = read_csv(str(tmp_path / "purify.csv"))
        assert rows[0][-3] == "false"

    def test_print_config(self, tmp_path, capsys):
        assert main(["localization", "--print-config", "--out", str(tmp_path / "p")]) == 0
        printed = yaml.safe_load(capsys.readouterr().out)
        assert printed["experiment"] == "localization"
        assert not (tmp_path / "p").exists()

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "0.1.0" in capsys.readouterr().out
