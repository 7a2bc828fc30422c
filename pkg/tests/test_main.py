import json

import pytest

from ure_eval import verifiers
from ure_eval.experiments import DEFAULT_MATRIX_TARGETS
from ure_eval.main import cli_main
from ure_eval.schemas import MonteCarloCheck

SMALL_WORLD = ["--users", "20", "--n", "40", "--family-size", "6", "--seed", "3"]


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def _predictions(tmp_path, users=2, items=6):
    rows = "".join(f"{u},{i},{1.0 / i}\n" for u in range(1, users + 1) for i in range(1, items + 1))
    return _write(tmp_path / "p.csv", "user_id,item_id,score\n" + rows)


def _run_twice(argv, path):
    assert cli_main(argv) == 0
    first = path.read_bytes()
    assert cli_main(argv) == 0
    return first, path.read_bytes()


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "world"
    assert cli_main(["simulate", *SMALL_WORLD, "--nbar", "10", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))["result"]
    predictions = [str(out / path) for role, path in manifest["files"].items() if role not in ("full", "rand")]
    return out, predictions


class TestVerify:
    def test_theorem1_example(self, capsys):
        code = cli_main(["verify", "--mode", "theorem1", "--n", "8", "--npos", "3", "--nbar", "4", "--k", "2"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["result"]["difference"] == "0"
        assert payload["result"]["pairs"] == 3920

    def test_incompatible_cutoffs(self, capsys):
        assert cli_main(["verify", "--mode", "theorem1", "--n", "8", "--nbar", "3", "--k", "2"]) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_flag_is_usage_error(self):
        assert cli_main(["verify", "--mode", "theorem2", "--n", "6"]) == 1

    def test_budget_exceeded(self):
        argv = ["verify", "--mode", "theorem1", "--n", "8", "--npos", "3", "--nbar", "4", "--k", "2", "--budget", "10"]
        assert cli_main(argv) == 1

    def test_failed_verification(self, monkeypatch, capsys):
        failing = MonteCarloCheck(mode="hypergeom", mean=0.5, stderr=0.01, trials=10, skipped=0, target=0.0, ok=False)
        monkeypatch.setitem(verifiers.VERIFIERS, "hypergeom", lambda args: {"ok": False, "result": failing})
        assert cli_main(["verify", "--mode", "hypergeom", "--n", "5", "--k", "2"]) == 3
        assert json.loads(capsys.readouterr().out)["result"]["ok"] is False

    @pytest.mark.parametrize(
        "argv",
        [
            ["--mode", "theorem2", "--n", "6", "--npos", "3", "--m", "2", "--nbar", "3"],
            ["--mode", "theorem2", "--n", "40", "--npos", "8", "--m", "3", "--nbar", "10", "--trials", "5000", "--seed", "4"],
        ],
    )
    def test_deterministic(self, tmp_path, argv):
        out = tmp_path / "verify.json"
        first, second = _run_twice(["verify", *argv, "--out", str(out)], out)
        assert first == second
        assert json.loads(first)["config"]["mode"] == "theorem2"

    def test_hypergeom_csv(self, capsys):
        assert cli_main(["verify", "--mode", "hypergeom", "--n", "10", "--npos", "4", "--k", "3", "--format", "csv"]) == 0
        out = capsys.readouterr().out
        assert "expected_recall,3/10" in out
        assert "key,value" in out


class TestEval:
    def test_no_observed_positives_anywhere(self, tmp_path, capsys):
        preds = _predictions(tmp_path)
        rand = _write(tmp_path / "rand.csv", "user_id,item_id,label\n1,1,0\n1,2,0\n2,3,0\n")
        code = cli_main(["eval", "--scheme", "ure", "--k", "5", "--dataset", rand, "--predictions", preds])
        assert code == 2
        assert "skipped" in capsys.readouterr().err

    def test_ure(self, tmp_path, capsys):
        preds = _predictions(tmp_path)
        rand = _write(tmp_path / "rand.csv", "user_id,item_id,label\n1,1,1\n1,4,1\n2,5,1\n2,2,0\n")
        assert cli_main(["eval", "--scheme", "ure", "--k", "3", "--dataset", rand, "--predictions", preds]) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        # user 1: items 1 and 4 observed, only item 1 within the top 3; user 2: item 5 is below
        assert result["per_user"] == {"1": 0.5, "2": 0.0}
        assert result["macro_mean"] == 0.25

    def test_traditional_uses_kbar(self, tmp_path, capsys):
        preds = _predictions(tmp_path)
        rand = _write(tmp_path / "rand.csv", "user_id,item_id,label\n1,1,0\n1,4,1\n1,6,0\n")
        assert cli_main(["eval", "--scheme", "rand", "--kbar", "2", "--dataset", rand, "--predictions", preds]) == 0
        assert json.loads(capsys.readouterr().out)["result"]["macro_mean"] == 1.0

    def test_incomplete_full_is_data_error(self, tmp_path):
        preds = _predictions(tmp_path)
        full = _write(tmp_path / "full.csv", "user_id,item_id,label\n1,1,1\n1,2,0\n")
        assert cli_main(["eval", "--scheme", "full", "--k", "2", "--dataset", full, "--predictions", preds]) == 2

    def test_missing_file_is_usage_error(self, tmp_path):
        argv = ["eval", "--scheme", "ure", "--k", "2", "--dataset", str(tmp_path / "x.csv"), "--predictions", "y.csv"]
        assert cli_main(argv) == 1

    def test_deterministic(self, tmp_path):
        preds = _predictions(tmp_path)
        rand = _write(tmp_path / "rand.csv", "user_id,item_id,label\n1,1,1\n1,4,1\n2,5,1\n")
        out = tmp_path / "report.csv"
        argv = ["eval", "--scheme", "ure", "--k", "3", "--dataset", rand, "--predictions", preds, "--out", str(out), "--format", "csv"]
        first, second = _run_twice(argv, out)
        assert first == second
        assert b"scheme,k,user_id,value" in first

    def test_external_ids_get_maps(self, tmp_path):
        preds = _write(tmp_path / "p.csv", "user_id,item_id,score\nann,a,0.9\nann,b,0.1\nann,c,0.5\n")
        rand = _write(tmp_path / "rand.csv", "user_id,item_id,label\nann,c,1\nann,b,0\n")
        out = tmp_path / "report.json"
        assert cli_main(["eval", "--scheme", "ure", "--k", "1", "--dataset", rand, "--predictions", preds, "--out", str(out)]) == 0
        assert (tmp_path / "report_users_idmap.csv").read_text(encoding="utf-8") == "dense_id,external_id\n1,ann\n"
        assert (tmp_path / "report_items_idmap.csv").exists()


class TestSimulate:
    def test_files(self, simulated):
        out, predictions = simulated
        assert (out / "full.csv").exists() and (out / "rand.csv").exists()
        assert len(predictions) == 6

    def test_deterministic(self, tmp_path):
        out = tmp_path / "w"
        argv = ["simulate", *SMALL_WORLD, "--nbar", "10", "--out", str(out)]
        assert cli_main(argv) == 0
        first = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        assert cli_main(argv) == 0
        second = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        assert first == second


class TestCorrelate:
    def test_synthetic_deterministic(self, tmp_path):
        out = tmp_path / "curve.json"
        argv = ["correlate", *SMALL_WORLD, "--nbar", "10", "--fixed", "rand@2", "--k-grid", "1,5,10,20", "--out", str(out)]
        first, second = _run_twice(argv, out)
        assert first == second
        curve = json.loads(first)["result"]
        assert curve["fixed"] == "rand@2"
        assert curve["k_grid"] == [1, 5, 10, 20]

    def test_matrix(self, capsys):
        argv = ["correlate", *SMALL_WORLD, "--nbar", "10", "--matrix", "--k-grid", "5,10"]
        assert cli_main(argv) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["row_metrics"] == ["ure@5", "ure@10"]

    def test_default_matrix_peaks_on_diagonal(self, capsys):
        assert cli_main(["correlate", "--matrix", "--seed", "7"]) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["col_k"] == list(DEFAULT_MATRIX_TARGETS)
        assert result["row_argmax"] == result["col_k"]

    def test_from_files(self, simulated, capsys):
        out, predictions = simulated
        argv = ["correlate", "--full", str(out / "full.csv"), "--rand", str(out / "rand.csv"), "--fixed", "ure@5", "--k-grid", "1,5,10"]
        for path in predictions:
            argv += ["--predictions", path]
        assert cli_main(argv) == 0
        assert json.loads(capsys.readouterr().out)["result"]["fixed"] == "ure@5"

    def test_predictions_need_labels(self, simulated):
        _, predictions = simulated
        assert cli_main(["correlate", "--predictions", predictions[0], "--predictions", predictions[1]]) == 1

    def test_yaml_config(self, tmp_path, capsys):
        config = _write(tmp_path / "c.yaml", "users: 20\nn: 40\nfamily-size: 6\nseed: 3\nnbar: 10\nk_grid: [1, 5, 10]\n")
        assert cli_main(["correlate", "--config", config, "--fixed", "rand@2"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["result"]["k_grid"] == [1, 5, 10]
        assert payload["config"]["nbar"] == 10

    def test_yaml_unknown_key(self, tmp_path):
        config = _write(tmp_path / "c.yaml", "users: 20\ncolour: blue\n")
        assert cli_main(["correlate", "--config", config]) == 1

    def test_bad_metric(self):
        assert cli_main(["correlate", *SMALL_WORLD, "--fixed", "gold@5"]) == 1


class TestSweep:
    def test_nbar_deterministic(self, tmp_path):
        out = tmp_path / "sweep.json"
        argv = ["sweep", "nbar", *SMALL_WORLD, "--nbar-values", "10,20", "--kbar", "2", "--k-grid", "1,5,10,20", "--out", str(out)]
        first, second = _run_twice(argv, out)
        assert first == second
        assert [c["nbar"] for c in json.loads(first)["result"]] == [10, 20]

    def test_kbar_csv_files(self, tmp_path):
        out = tmp_path / "sweep.csv"
        argv = ["sweep", "kbar", *SMALL_WORLD, "--nbar", "20", "--kbar-values", "1,3", "--k-grid", "1,5,10", "--out", str(out), "--format", "csv"]
        assert cli_main(argv) == 0
        assert (tmp_path / "sweep_rand1_nbar20.csv").exists()
        assert (tmp_path / "sweep_rand3_nbar20.csv").exists()

    def test_contrast(self, capsys):
        argv = ["sweep", "contrast", *SMALL_WORLD, "--nbar", "20", "--kbar-values", "2", "--k-grid", "1,5,10"]
        assert cli_main(argv) == 0
        assert [c["fixed"] for c in json.loads(capsys.readouterr().out)["result"]] == ["ure@K", "rand@2"]


class TestCompare:
    def test_against_full(self, simulated, tmp_path):
        out, predictions = simulated
        report = tmp_path / "compare.json"
        argv = ["compare", "--rand", str(out / "rand.csv"), "--full", str(out / "full.csv"), "--k", "5", "--kbar", "2"]
        for path in predictions:
            argv += ["--predictions", path]
        first, second = _run_twice([*argv, "--out", str(report)], report)
        assert first == second
        table = json.loads(first)["result"]
        assert table["reference"] == "full"
        assert len(table["rows"]) == 6
