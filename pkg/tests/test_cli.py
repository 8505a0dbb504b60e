import json

import numpy as np
import pytest

from cachenet import cli
from cachenet.cli import EXIT_OK, EXIT_VALIDATION, parse_config
from cachenet.coverage import Mobility, Policy
from cachenet.errors import ValidationError


def base_doc(**overrides):
    doc = {
        "scenario": {"policy": "P1", "mobility": "mobile", "n": 3},
        "library": {"K": 2, "gamma": 1.2, "L": 1},
        "channel": {"T_dB": 0.0, "alpha": 4.0, "lambda": 1.0},
        "placement": "optimal",
    }
    doc.update(overrides)
    return doc


def write_cfg(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestParseConfig:
    def test_happy_path(self):
        cfg = parse_config(base_doc())
        assert cfg.policy is Policy.P1
        assert cfg.mobility is Mobility.MOBILE
        assert cfg.n == 3
        assert cfg.params.T == 1.0

    def test_db_conversion(self):
        cfg = parse_config(base_doc(channel={"T_dB": 10.0, "alpha": 4.0}))
        assert abs(cfg.params.T - 10.0) < 1e-12

    def test_exactly_one_threshold_field(self):
        with pytest.raises(ValidationError, match="exactly one"):
            parse_config(base_doc(channel={"T_dB": 0.0, "T_linear": 1.0, "alpha": 4.0}))
        with pytest.raises(ValidationError, match="exactly one"):
            parse_config(base_doc(channel={"alpha": 4.0}))

    def test_exactly_one_of_n_and_range(self):
        with pytest.raises(ValidationError, match="exactly one"):
            parse_config(base_doc(scenario={"policy": "P1", "mobility": "mobile", "n": 1, "n_range": [1, 3]}))

    def test_n_range_expansion(self):
        cfg = parse_config(base_doc(scenario={"policy": "P2", "mobility": "static", "n_range": [2, 5]}))
        assert cfg.n_values == (2, 3, 4, 5)

    def test_explicit_placement_validated(self):
        cfg = parse_config(base_doc(placement=[0.7, 0.3]))
        assert np.allclose(cfg.placement.probs, [0.7, 0.3])
        with pytest.raises(ValidationError, match="simplex-sum"):
            parse_config(base_doc(placement=[0.7, 0.7]))

    def test_missing_field_reported_with_path(self):
        with pytest.raises(ValidationError, match="library"):
            parse_config({k: v for k, v in base_doc().items() if k != "library"})
        with pytest.raises(ValidationError, match="placement"):
            parse_config({k: v for k, v in base_doc().items() if k != "placement"})

    def test_explicit_popularity_vector(self):
        cfg = parse_config(base_doc(library={"request_probs": [0.7, 0.3], "L": 1}))
        assert cfg.lib.K == 2

    def test_bad_enums(self):
        with pytest.raises(ValidationError, match="policy"):
            parse_config(base_doc(scenario={"policy": "P9", "mobility": "mobile", "n": 1}))
        with pytest.raises(ValidationError, match="mobility"):
            parse_config(base_doc(scenario={"policy": "P1", "mobility": "warp", "n": 1}))

    def test_empty_sweep_rejected(self):
        with pytest.raises(ValidationError, match="non-empty"):
            parse_config(base_doc(sweep={"axis": "n", "values": []}))


class TestCommands:
    def test_optimize_reports_corollary1_value(self, tmp_path, capsys):
        rc = cli.main(["optimize", "--config", write_cfg(tmp_path, base_doc())])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        header, row = out.strip().splitlines()
        vals = dict(zip(header.split(","), row.split(",")))
        assert abs(float(vals["b_1"]) - 0.7635039003402626) < 1e-9
        assert vals["certified"] == "true"

    def test_optimize_static_caches_most_popular(self, tmp_path, capsys):
        doc = base_doc(
            scenario={"policy": "P1", "mobility": "static", "n": 4},
            library={"K": 3, "gamma": 1.2, "L": 1},
        )
        rc = cli.main(["optimize", "--config", write_cfg(tmp_path, doc)])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        header, row = out.strip().splitlines()
        vals = dict(zip(header.split(","), row.split(",")))
        assert [vals["b_1"], vals["b_2"], vals["b_3"]] == ["1", "0", "0"]

    def test_optimize_rejects_explicit_placement(self, tmp_path, capsys):
        rc = cli.main(["optimize", "--config", write_cfg(tmp_path, base_doc(placement=[0.7, 0.3]))])
        assert rc == EXIT_VALIDATION

    def test_evaluate_matches_library_api(self, tmp_path, capsys):
        from cachenet import coverage as cov
        from cachenet.coverage import ChannelParams, Scenario
        from cachenet.popularity import ZipfLibrary, validate_placement

        rc = cli.main(["evaluate", "--config", write_cfg(tmp_path, base_doc(placement=[0.7, 0.3]))])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        header, row = out.strip().splitlines()
        vals = dict(zip(header.split(","), row.split(",")))
        expect = cov.hit_prob(
            Scenario(Policy.P1, Mobility.MOBILE, 3),
            validate_placement([0.7, 0.3], 1),
            ZipfLibrary.zipf(2, 1.2, 1),
            ChannelParams(T=1.0, alpha=4.0),
        ).value
        assert abs(float(vals["hit_prob"]) - expect) < 1e-9

    def test_simulate_byte_stable(self, tmp_path):
        doc = base_doc(placement=[0.7, 0.3], sim={"trials": 5000, "seed": 21})
        cfg = write_cfg(tmp_path, doc)
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        assert cli.main(["simulate", "--config", cfg, "--out", str(out1)]) == EXIT_OK
        assert cli.main(["simulate", "--config", cfg, "--out", str(out2)]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()

    def test_simulate_requires_sim_section(self, tmp_path):
        rc = cli.main(["simulate", "--config", write_cfg(tmp_path, base_doc(placement=[0.7, 0.3]))])
        assert rc == EXIT_VALIDATION

    def test_cli_overrides(self, tmp_path, capsys):
        doc = base_doc(placement=[0.7, 0.3], sim={"trials": 5000, "seed": 21})
        rc = cli.main(["simulate", "--config", write_cfg(tmp_path, doc), "--trials", "2000", "--seed", "5"])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        header, row = out.strip().splitlines()
        vals = dict(zip(header.split(","), row.split(",")))
        assert vals["trials"] == "2000"
        assert vals["seed"] == "5"

    def test_sweep_n_axis(self, tmp_path, capsys):
        doc = base_doc(
            library={"K": 3, "gamma": 1.2, "L": 1},
            sweep={"axis": "n", "values": [1, 100]},
        )
        rc = cli.main(["sweep", "--config", write_cfg(tmp_path, doc)])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        lines = out.strip().splitlines()
        header = lines[0].split(",")
        first = dict(zip(header, lines[1].split(",")))
        last = dict(zip(header, lines[2].split(",")))
        assert float(first["b_1"]) == 1.0  # small n: cache the most popular file
        for c in ("b_1", "b_2", "b_3"):
            assert abs(float(last[c]) - 1.0 / 3.0) < 0.02  # large n: even split

    def test_sweep_b1_axis(self, tmp_path, capsys):
        doc = base_doc(placement=[0.5, 0.5], sweep={"axis": "b1", "values": [0.0, 0.5, 1.0]})
        rc = cli.main(["sweep", "--config", write_cfg(tmp_path, doc)])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        assert len(out.strip().splitlines()) == 4

    def test_sweep_k_axis_decreasing_hit(self, tmp_path, capsys):
        doc = base_doc(sweep={"axis": "K", "values": [2, 5, 10]})
        rc = cli.main(["sweep", "--config", write_cfg(tmp_path, doc)])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        lines = out.strip().splitlines()
        hits = [float(line.split(",")[5]) for line in lines[1:]]
        assert hits[0] > hits[1] > hits[2]

    def test_json_format_mirrors_csv(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, base_doc(placement=[0.7, 0.3]))
        cli.main(["evaluate", "--config", cfg, "--format", "json"])
        payload = json.loads(capsys.readouterr().out)
        assert "rows" in payload and len(payload["rows"]) == 1
        assert 0.0 <= payload["rows"][0]["hit_prob"] <= 1.0

    def test_verify_passes_at_defaults(self, tmp_path, capsys):
        doc = base_doc(placement=[0.7, 0.3], sim={"trials": 30000, "seed": 22})
        rc = cli.main(["verify", "--config", write_cfg(tmp_path, doc)])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        assert "FAIL" not in out
        assert "pass" in out

    def test_missing_config_file(self):
        assert cli.main(["optimize", "--config", "/nonexistent/cfg.json"]) == EXIT_VALIDATION

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert cli.main(["optimize", "--config", str(path)]) == EXIT_VALIDATION
