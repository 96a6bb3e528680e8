import json
import random

import numpy as np
import pytest

import omrf.cli as cli
from omrf.cli import aggregate, benchmark_cells, load_config, main
from omrf.exceptions import ValidationError


def write_config(path, **sections):
    path.write_text(json.dumps(sections))
    return str(path)


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    """One simulated dataset (p=3 binary, n=150) shared by the command tests."""
    d = tmp_path_factory.mktemp("sim")
    cfg = write_config(d / "cfg.json", simulate={"N": 150, "P": 3, "K_str": 1, "K_sample": 1,
                                                     "dichotomize": True})
    assert main(["simulate", "--config", cfg, "--out", str(d), "--seed", "5"]) == 0
    return d / "dataset_s000_r000.csv"


def sampler_cfg(tmp_path, **extra):
    return write_config(tmp_path / "run.json", model={"p": 3, "m": 1},
                        sampler={"iterations": 600, "burn_in": 200},
                        mc_samples={"inner": 300, "outer": 5000}, **extra)


class TestConfig:
    def test_defaults_materialised(self):
        cfg = load_config()
        assert cfg["mc_samples"] == {"inner": 25_000, "outer": 100_000}
        assert cfg["benchmark"]["K_str"] * cfg["benchmark"]["K_sample"] == 20

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ValidationError, match="bogus"):
            load_config(write_config(tmp_path / "c.json", sampler={"bogus": 1}))
        assert main(["sample", "--config", str(tmp_path / "c.json")]) == 2

    def test_wrong_type(self, tmp_path):
        with pytest.raises(ValidationError):
            load_config(write_config(tmp_path / "c.json", seed="seven"))


class TestSimulate:
    def test_single_dataset_writes_two_files(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", simulate={"N": 80, "P": 3, "K_str": 1, "K_sample": 1})
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        written = sorted(p.name for p in out.iterdir() if p.name.startswith("dataset_"))
        assert len(written) == 2
        echoed = json.loads((out / "config.json").read_text())
        assert echoed["simulate"]["N"] == 80 and "benchmark" in echoed

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", simulate={"N": 60, "P": 4, "K_str": 2, "K_sample": 1})
        for name in ("a", "b"):
            assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name), "--seed", "3"]) == 0
        for f in (tmp_path / "a").glob("dataset_*"):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_full_plan_count(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", simulate={"N": 30, "P": 3, "gibbs_sweeps": 5})
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        assert len(list(out.glob("dataset_*.csv"))) == 100

    def test_invalid_plan(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", simulate={"P": 40})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2


class TestSample:
    def test_pseudo(self, tmp_path, small_data):
        assert main(["sample", "--config", sampler_cfg(tmp_path), "--data", str(small_data),
                     "--method", "pseudo", "--out", str(tmp_path)]) == 0
        side = json.loads((tmp_path / "chain_pseudo.json").read_text())
        assert 0 < side["acceptance_rate"] <= 1

    def test_core_sidecar_has_rescaling(self, tmp_path, small_data):
        assert main(["sample", "--config", sampler_cfg(tmp_path), "--data", str(small_data),
                     "--method", "core", "--out", str(tmp_path)]) == 0
        side = json.loads((tmp_path / "chain_core.json").read_text())
        resc = side["meta"]["rescaling"]
        assert resc["variant"] == "GHW"
        assert np.asarray(resc["A_inv"]).shape == (6, 6)

    def test_exact_over_capacity(self, tmp_path):
        data = tmp_path / "wide.csv"
        data.write_text(",".join(f"x{i}" for i in range(12)) + "\n" + ",".join(["1"] * 12) + "\n")
        cfg = write_config(tmp_path / "c.json", model={"p": 12, "m": 3})
        assert main(["sample", "--config", cfg, "--data", str(data), "--method", "exact",
                     "--out", str(tmp_path)]) == 3

    def test_bad_data(self, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text("x0,x1,x2\n0,1,5\n")
        assert main(["sample", "--config", sampler_cfg(tmp_path), "--data", str(data),
                     "--out", str(tmp_path)]) == 2


@pytest.fixture(scope="module")
def chains(tmp_path_factory, small_data):
    d = tmp_path_factory.mktemp("chains")
    cfg = sampler_cfg(d)
    for method in ("exact", "pseudo"):
        assert main(["sample", "--config", cfg, "--data", str(small_data), "--method", method,
                     "--out", str(d)]) == 0
    assert main(["calibrate", "--config", cfg, "--data", str(small_data), "--method", "ph-ghw",
                 "--chain", str(d / "chain_pseudo.csv"), "--out", str(d)]) == 0
    return d, cfg


class TestCalibrateAndMetrics:
    def test_calibrated_chain_written(self, chains):
        d, _ = chains
        side = json.loads((d / "chain_ph-ghw.json").read_text())
        assert side["method"] == "ph-ghw"
        assert "rescaling" in side["meta"]

    def test_calibrate_rejects_sampler_method(self, chains, small_data):
        d, cfg = chains
        assert main(["calibrate", "--config", cfg, "--data", str(small_data), "--method", "core",
                     "--chain", str(d / "chain_pseudo.csv"), "--out", str(d / "x")]) == 2

    def test_report(self, chains):
        d, cfg = chains
        out = d / "metrics"
        assert main(["metrics", "--config", cfg, "--exact", str(d / "chain_exact.csv"),
                     "--chains", str(d / "chain_pseudo.csv"), str(d / "chain_ph-ghw.csv"),
                     "--out", str(out)]) == 0
        reports = json.loads((out / "metrics.json").read_text())["reports"]
        assert [r["method"] for r in reports] == ["exact", "pseudo", "ph-ghw"]
        for r in reports:
            assert all(0 <= v <= 1 for v in r["eta"])
        lines = (out / "metrics.csv").read_text().strip().split("\n")
        assert lines[0] == "method,parameter,metric,value"
        assert sum(line.startswith("ph-ghw,") for line in lines) == 6 * 4

    def test_missing_exact(self, chains):
        d, cfg = chains
        assert main(["metrics", "--config", cfg, "--exact", str(d / "nope.csv"),
                     "--chains", str(d / "chain_pseudo.csv"), "--out", str(d / "m2")]) == 2


class TestBenchmark:
    def test_default_manifest_count(self):
        cells = benchmark_cells(load_config())
        assert len(cells) == 3 * 2 * 2 * 20
        assert len({c["id"] for c in cells}) == len(cells)

    @pytest.fixture
    def tiny(self, tmp_path):
        cfg = write_config(tmp_path / "b.json",
                           benchmark={"structures": ["full"], "P": [3], "N": [120], "K_str": 1, "K_sample": 2,
                                      "methods": ["pseudo", "core"], "iterations": 400, "burn_in": 100,
                                      "inner": 200, "outer": 2000})
        return cfg, tmp_path / "bench"

    def test_run_and_resume(self, tiny, monkeypatch):
        cfg, out = tiny
        calls = []
        real = cli.run_cell
        monkeypatch.setattr(cli, "run_cell", lambda c, cell: calls.append(cell["id"]) or real(c, cell))
        assert main(["benchmark", "--config", cfg, "--out", str(out)]) == 0
        assert len(calls) == 2
        header = (out / "aggregate.csv").read_text().split("\n")[0].split(",")
        assert {"median", "q05", "q95"} <= set(header)
        manifest = json.loads((out / "manifest.json").read_text())
        assert all(c["done"] for c in manifest["cells"])

        calls.clear()
        assert main(["benchmark", "--config", cfg, "--out", str(out), "--resume"]) == 0
        assert calls == []
        (out / "cells" / f"{manifest['cells'][1]['id']}.json").unlink()
        assert main(["benchmark", "--config", cfg, "--out", str(out), "--resume"]) == 0
        assert calls == [manifest["cells"][1]["id"]]

    def test_aggregation_order_invariant(self):
        rng = np.random.default_rng(0)
        rows = [{"structure_type": "full", "P": 4, "N": 500, "method": m, "kind": k, "metric": "eta",
                 "value": float(rng.uniform())} for m in ("pseudo", "core") for k in ("edge", "absent")
                for _ in range(25)]
        shuffled = rows[:]
        random.Random(1).shuffle(shuffled)
        assert aggregate(rows) == aggregate(shuffled)
        med = [r for r in aggregate(rows) if r["method"] == "core" and r["kind"] == "edge"][0]
        vals = [r["value"] for r in rows if r["method"] == "core" and r["kind"] == "edge"]
        assert med["median"] == pytest.approx(np.median(vals))
        assert med["q05"] <= med["median"] <= med["q95"]
