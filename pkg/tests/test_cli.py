import hashlib
import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from elrsel import simulate as sim
from elrsel.cli import main, parse_points, parse_q_grid, UsageError

SCHEMA = json.loads(resources.files("elrsel").joinpath("schemas/run_report.schema.json").read_text())


def write_csv(path, cols: dict):
    names = list(cols)
    rows = np.column_stack([cols[c] for c in names])
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in r) + "\n")
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    report = json.loads(out) if out.strip() else None
    if report is not None:
        jsonschema.validate(report, SCHEMA)
    return code, report, err


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    d = sim.gen_example2(300, theta=0.0, tau=0.0, seed=3)
    return write_csv(tmp_path_factory.mktemp("d") / "ex2.csv",
                     {"y": d.y, "x1": d.X[:, 0], "x2": d.X[:, 1], "z": d.z})


@pytest.fixture(scope="module")
def noiseless_csv(tmp_path_factory):
    rng = np.random.default_rng(8)
    X = rng.uniform(size=(200, 2))
    return write_csv(tmp_path_factory.mktemp("n") / "nl.csv", {"y": np.sin(3 * X[:, 1]), "x1": X[:, 0], "x2": X[:, 1]})


class TestParsers:
    def test_q_grid(self):
        assert parse_q_grid("1,2,3") == [1, 2, 3]
        assert parse_q_grid("2:3,3:3") == [(2, 3), (3, 3)]
        with pytest.raises(UsageError):
            parse_q_grid("a")

    def test_points(self):
        assert parse_points("0,0;0.5,0.1") == ((0.0, 0.0), (0.5, 0.1))
        assert parse_points("0.08") == ((0.0, 0.08),)
        with pytest.raises(UsageError):
            parse_points("1,2,3")


class TestCompare:
    def test_identical_models(self, capsys, sim_csv):
        code, rep, _ = run(capsys, "compare", "--data", sim_csv, "--response", "y", "--index-var", "z",
                           "--model-a", "additive", "--model-b", "additive", "--vars-a", "x1,x2", "--vars-b", "x1,x2")
        assert code == 0 and rep["statistic"] == 0 and rep["decision"] == "equivalent"

    def test_varycoef_vs_additive(self, capsys, sim_csv):
        code, rep, _ = run(capsys, "compare", "--data", sim_csv, "--response", "y", "--index-var", "z",
                           "--model-a", "varycoef", "--model-b", "additive", "--vars-b", "x1,x2")
        assert code in (0, 10, 11, 12)
        assert rep["models"][0]["kind"] == "varycoef" and "timings" in rep

    def test_missing_index_var(self, capsys, sim_csv):
        code, rep, err = run(capsys, "compare", "--data", sim_csv, "--response", "y",
                             "--model-a", "varycoef", "--model-b", "additive")
        assert code == 2 and rep is None and "index-var" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, _ = run(capsys, "compare", "--data", str(tmp_path / "none.csv"), "--response", "y",
                         "--model-a", "additive", "--model-b", "additive")
        assert code == 3

    def test_bad_cell(self, capsys, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("y,x\n1,2\n3,abc\n")
        code, _, err = run(capsys, "compare", "--data", str(p), "--response", "y",
                           "--model-a", "additive", "--model-b", "additive")
        assert code == 3 and "row 3" in err

    def test_config_precedence(self, capsys, sim_csv, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text('alpha = 0.2\n[compare]\nmodel-a = "additive"\nmodel-b = "additive"\nresponse = "y"\n')
        code, rep, _ = run(capsys, "compare", "--config", str(cfg), "--data", sim_csv, "--alpha", "0.01")
        assert code == 0 and rep["config"]["alpha"] == 0.01 and rep["config"]["model_a"] == "additive"
        cfg.write_text("bogus = 1\n")
        code, _, _ = run(capsys, "compare", "--config", str(cfg), "--data", sim_csv, "--response", "y")
        assert code == 2

    def test_out_file(self, capsys, sim_csv, tmp_path):
        out = tmp_path / "r.json"
        code, rep, _ = run(capsys, "compare", "--data", sim_csv, "--response", "y", "--model-a", "additive",
                           "--model-b", "additive", "--vars-b", "x1", "--out", str(out))
        assert rep is None
        jsonschema.validate(json.loads(out.read_text()), SCHEMA)


class TestTestVar:
    def test_drop_irrelevant(self, capsys, noiseless_csv):
        code, rep, _ = run(capsys, "test-var", "--data", noiseless_csv, "--response", "y", "--drop-var", "x1",
                           "--workers", "4", "--q", "3")
        assert rep["action"] == "drop_variable" and rep["drop_var"] == "x1" and code == 0

    def test_verify(self, capsys, sim_csv):
        code, rep, err = run(capsys, "test-var", "--data", sim_csv, "--response", "y", "--vars", "x1,x2,z",
                             "--drop-var", "2", "--workers", "8", "--verify")
        assert rep["distributed_matches_full"] is True and "match" in err

    def test_shard_round_trip(self, capsys, sim_csv, tmp_path):
        args = ["test-var", "--data", sim_csv, "--response", "y", "--drop-var", "x1", "--workers", "5", "--q", "2"]
        _, first, _ = run(capsys, *args, "--emit-shards", str(tmp_path / "s"))
        _, again, _ = run(capsys, *args, "--from-shards", str(tmp_path / "s"))
        assert again["statistic"] == first["statistic"]

    def test_bad_drop(self, capsys, sim_csv):
        code, _, _ = run(capsys, "test-var", "--data", sim_csv, "--response", "y", "--drop-var", "9")
        assert code == 2


class TestQuantile:
    @pytest.mark.parametrize("q,workers,expected", [(0.5, 1, 2.0), (0.5, 2, 2.0), (0.0, 3, 1.0), (1.0, 2, 3.0)])
    def test_small(self, capsys, tmp_path, q, workers, expected):
        p = write_csv(tmp_path / "v.csv", {"v": [3.0, 1.0, 2.0]})
        code, rep, _ = run(capsys, "quantile", "--data", p, "--column", "v", "--q", str(q), "--workers", str(workers))
        assert code == 0 and rep["value"] == expected

    def test_interpolated(self, capsys, tmp_path):
        p = write_csv(tmp_path / "v.csv", {"v": [40.0, 10.0, 30.0, 20.0]})
        _, rep, _ = run(capsys, "quantile", "--data", p, "--column", "v", "--q", "0.25", "--workers", "2")
        assert rep["value"] == 17.5

    def test_bad_q(self, capsys, tmp_path):
        p = write_csv(tmp_path / "v.csv", {"v": [1.0, 2.0]})
        code, _, _ = run(capsys, "quantile", "--data", p, "--column", "v", "--q", "1.5")
        assert code == 2


class TestSimulate:
    def test_byte_reproducible(self, capsys, tmp_path):
        args = ["simulate", "--example", "2", "--n", "150", "--reps", "2", "--seed", "4"]
        digests = []
        for k in range(2):
            run(capsys, *args, "--out-dir", str(tmp_path / str(k)))
            digests.append([hashlib.sha256((tmp_path / str(k) / f).read_bytes()).hexdigest()
                            for f in ("table.json", "table.csv", "trace.csv")])
        assert digests[0][1:] == digests[1][1:]
        # table.json embeds argv which names the output directory
        a = json.loads((tmp_path / "0" / "table.json").read_text())
        b = json.loads((tmp_path / "1" / "table.json").read_text())
        assert a["rows"] == b["rows"] and "timings" not in a

    def test_example4_workers(self, capsys):
        base = ["simulate", "--example", "4", "--n", "200", "--reps", "5", "--grid", "0;0.4"]
        _, one, _ = run(capsys, *base, "--workers", "1")
        _, many, _ = run(capsys, *base, "--workers", "50")
        for r1, r2 in zip(one["rows"], many["rows"]):
            assert r1["rate_0.05"] == r2["rate_0.05"]

    def test_example2_band(self, capsys):
        code, rep, _ = run(capsys, "simulate", "--example", "2", "--n", "200", "--reps", "50")
        assert code == 0 and rep["valid"]
        assert 0.0 <= rep["rows"][0]["rate_0.05"] <= 0.35

    def test_bad_example(self, capsys):
        assert main(["simulate", "--example", "7"]) == 2
