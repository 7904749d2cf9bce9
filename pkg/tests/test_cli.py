import csv
import io
import json

import pytest

from iecd2.backends import generate_toy_corpus, make_random_trace, save_toy_corpus, write_trace
from iecd2.cli import ABLATE_COLUMNS, BENCH_COLUMNS, SweepSpec, main
from iecd2.errors import ConfigurationError


@pytest.fixture
def toy_corpus(tmp_path):
    path = tmp_path / "corpus.json"
    save_toy_corpus(generate_toy_corpus(seed=0, n_scenes=6, vocab_size=12, lam=0.5),
                    path)
    return path


@pytest.fixture
def lam0_corpus(tmp_path):
    path = tmp_path / "lam0.json"
    save_toy_corpus(generate_toy_corpus(seed=0, n_scenes=3, vocab_size=10, lam=0.0),
                    path)
    return path


@pytest.fixture
def trace_file(tmp_path):
    path = tmp_path / "trace.bin"
    write_trace(make_random_trace(24, 10, seed=5), path, fmt="binary")
    return path


@pytest.fixture
def annotations_file(tmp_path):
    path = tmp_path / "ann.json"
    path.write_text(json.dumps({
        "images": {
            "img1": ["dog", "grass"],
            "img2": ["cat", "sofa"],
            "img3": ["tree"],
        },
        "synonyms": {
            "dog": "dog", "puppy": "dog", "grass": "grass", "cat": "cat",
            "sofa": "sofa", "tree": "tree", "bone": "bone", "frisbee": "frisbee",
        },
        "target_list": ["frisbee", "bone"],
    }), encoding="utf-8")
    return path


class TestGenToy:
    def test_same_seed_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["gen-toy", "--seed", "7", "--n-scenes", "5",
                     "--vocab-size", "10", "--lambda", "0.5", "--out", str(a)]) == 0
        assert main(["gen-toy", "--seed", "7", "--n-scenes", "5",
                     "--vocab-size", "10", "--lambda", "0.5", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_defaults_are_the_acceptance_corpus(self, tmp_path):
        from iecd2.cli import build_parser
        args = build_parser().parse_args(["gen-toy", "--out", str(tmp_path / "c.json")])
        assert args.seed == 0
        assert args.n_scenes == 100
        assert args.vocab_size == 12
        assert args.lam == 0.5


class TestDecode:
    def test_lambda_zero_mean_gate_exactly_half(self, lam0_corpus, tmp_path, capsys):
        rc = main(["decode", "--scenes", str(lam0_corpus), "--t-evid", "1.0",
                   "--max-tokens", "5", "--out", str(tmp_path / "run")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "mean_gate=0.5 " in out
        assert "mean_divergence=0.0 " in out
        assert (tmp_path / "run" / "tokens.txt").exists()
        assert (tmp_path / "run" / "gate_trace.jsonl").exists()

    def test_trace_run_token_count_bounded(self, trace_file, tmp_path, capsys):
        rc = main(["decode", "--trace", str(trace_file), "--max-tokens", "10",
                   "--out", str(tmp_path / "run")])
        assert rc == 0
        tokens = (tmp_path / "run" / "tokens.txt").read_text().split()
        assert len(tokens) <= 10

    def test_missing_trace_file_exits_2_naming_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.bin"
        rc = main(["decode", "--trace", str(missing), "--out", str(tmp_path)])
        assert rc == 2
        assert str(missing) in capsys.readouterr().err

    def test_both_backends_rejected(self, toy_corpus, trace_file, tmp_path, capsys):
        rc = main(["decode", "--scenes", str(toy_corpus), "--trace", str(trace_file),
                   "--out", str(tmp_path)])
        assert rc == 2

    def test_scene_selection(self, toy_corpus, tmp_path, capsys):
        rc = main(["decode", "--scenes", str(toy_corpus), "--scene-id", "scene-003",
                   "--max-tokens", "4", "--out", str(tmp_path / "r")])
        assert rc == 0
        rc = main(["decode", "--scenes", str(toy_corpus), "--scene-id", "missing",
                   "--max-tokens", "4", "--out", str(tmp_path / "r")])
        assert rc == 2

    def test_config_file_with_flag_override(self, toy_corpus, tmp_path, capsys):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({
            "decoder": {"max_tokens": 4, "eta": -2.0},
            "backend": {"scenes": str(toy_corpus)},
            "prompts": {"task": "caption"},
        }), encoding="utf-8")
        rc = main(["decode", "--config", str(cfg_path), "--eta", "-5.0",
                   "--out", str(tmp_path / "r")])
        assert rc == 0
        header = json.loads(
            (tmp_path / "r" / "gate_trace.jsonl").read_text().splitlines()[0])
        assert header["config"]["eta"] == -5.0
        assert header["config"]["max_tokens"] == 4


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestAblate:
    def test_eta_sweep_rates_non_increasing(self, toy_corpus, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        rc = main(["ablate", "--scenes", str(toy_corpus),
                   "--eta-grid=-2,-3,-5",
                   "--t-instr-grid", "1.0", "--t-evid-grid", "0.9",
                   "--max-tokens", "8", "--out", str(out)])
        assert rc == 0
        rows = _read_csv(out)
        assert len(rows) == 3
        rate = {float(r["eta"]): float(r["chair_analogue"]) for r in rows}
        assert rate[-2.0] >= rate[-3.0] >= rate[-5.0]
        hal = {float(r["eta"]): float(r["hal_analogue"]) for r in rows}
        assert hal[-2.0] >= hal[-3.0] >= hal[-5.0]

    def test_rows_in_lexicographic_grid_order(self, toy_corpus, tmp_path):
        out = tmp_path / "sweep.csv"
        main(["ablate", "--scenes", str(toy_corpus),
              "--eta-grid=-2,-5,-3", "--t-instr-grid", "1.0",
              "--t-evid-grid", "0.9", "--max-tokens", "4", "--out", str(out)])
        rows = _read_csv(out)
        assert [float(r["eta"]) for r in rows] == [-5.0, -3.0, -2.0]

    def test_single_cell_matches_decode_aggregate(self, tmp_path, capsys):
        corpus = tmp_path / "one.json"
        save_toy_corpus(generate_toy_corpus(seed=2, n_scenes=1, vocab_size=12,
                                            lam=0.5), corpus)
        out = tmp_path / "cell.csv"
        rc = main(["ablate", "--scenes", str(corpus), "--eta-grid=-3",
                   "--t-instr-grid", "1.0", "--t-evid-grid", "0.9",
                   "--max-tokens", "6", "--out", str(out)])
        assert rc == 0
        capsys.readouterr()
        row = _read_csv(out)[0]
        rc = main(["decode", "--scenes", str(corpus), "--max-tokens", "6",
                   "--out", str(tmp_path / "d")])
        assert rc == 0
        summary = capsys.readouterr().out
        mean_gate = float(summary.split("mean_gate=")[1].split(" ")[0])
        assert float(row["mean_gate"]) == mean_gate

    def test_divergence_grid_rows_distinct(self, toy_corpus, tmp_path):
        out = tmp_path / "div.csv"
        rc = main(["ablate", "--scenes", str(toy_corpus), "--eta-grid=-3",
                   "--t-instr-grid", "1.0", "--t-evid-grid", "0.9",
                   "--divergence-grid", "symmetric-kl,hellinger",
                   "--max-tokens", "6", "--out", str(out)])
        assert rc == 0
        rows = _read_csv(out)
        assert {r["divergence"] for r in rows} == {"symmetric-kl", "hellinger"}
        gates = {r["divergence"]: float(r["mean_gate"]) for r in rows}
        assert gates["symmetric-kl"] != gates["hellinger"]

    def test_schema_stable_header(self, toy_corpus, tmp_path):
        out = tmp_path / "sweep.csv"
        main(["ablate", "--scenes", str(toy_corpus), "--eta-grid=-3",
              "--t-instr-grid", "1.0", "--t-evid-grid", "0.9",
              "--max-tokens", "4", "--out", str(out)])
        header = out.read_text(encoding="utf-8").splitlines()[0]
        assert header == ",".join(ABLATE_COLUMNS)

    def test_cap_enforced(self, toy_corpus, tmp_path, capsys):
        rc = main(["ablate", "--scenes", str(toy_corpus),
                   "--eta-grid=-2,-3,-5", "--cap", "2",
                   "--out", str(tmp_path / "x.csv")])
        assert rc == 2

    def test_sweep_spec_validation(self):
        with pytest.raises(ConfigurationError):
            SweepSpec(eta_grid=())
        with pytest.raises(ConfigurationError):
            SweepSpec(cap=3)


class TestEval:
    def test_chair_golden_csv(self, annotations_file, tmp_path, capsys):
        predictions = tmp_path / "preds.jsonl"
        rows = [
            {"image_id": "img1", "caption": "a dog with a frisbee on the grass"},
            {"image_id": "img2", "caption": "a cat on a sofa"},
            {"image_id": "img3", "caption": "a tree"},
            {"image_id": "img1", "caption": "a puppy"},
            {"image_id": "img2", "caption": "a bone"},
        ]
        predictions.write_text("\n".join(json.dumps(r) for r in rows),
                               encoding="utf-8")
        out = tmp_path / "report.csv"
        rc = main(["eval", "--metric", "chair", "--predictions", str(predictions),
                   "--annotations", str(annotations_file), "--out", str(out)])
        assert rc == 0
        # 2 of 5 captions dirty; 2 hallucinated of 8 mentions
        assert out.read_bytes() == (
            b"metric,value,n\r\n"
            b"chair_s,0.4,5\r\n"
            b"chair_i,0.25,8\r\n"
        )

    def test_binary_fixture(self, annotations_file, tmp_path, capsys):
        predictions = tmp_path / "preds.jsonl"
        labels = ["yes", "yes", "no", "no"]
        predictions.write_text(
            "\n".join(json.dumps({"question_id": str(i), "predicted": "yes",
                                  "label": lab})
                      for i, lab in enumerate(labels)), encoding="utf-8")
        rc = main(["eval", "--metric", "binary", "--predictions", str(predictions),
                   "--annotations", str(annotations_file)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "accuracy,0.5,4" in out
        assert "recall,1.0,4" in out
        assert "f1,0.6666666666666666,4" in out

    def test_amber_runs(self, annotations_file, tmp_path, capsys):
        predictions = tmp_path / "preds.jsonl"
        predictions.write_text(
            json.dumps({"image_id": "img1", "caption": "a dog on grass"}),
            encoding="utf-8")
        rc = main(["eval", "--metric", "amber", "--predictions", str(predictions),
                   "--annotations", str(annotations_file)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "amber_cover,100.0,1" in out

    def test_empty_predictions_error_exit(self, annotations_file, tmp_path, capsys):
        predictions = tmp_path / "empty.jsonl"
        predictions.write_text("", encoding="utf-8")
        rc = main(["eval", "--metric", "chair", "--predictions", str(predictions),
                   "--annotations", str(annotations_file)])
        assert rc == 2

    def test_unannotated_image_is_evaluation_failure(self, annotations_file,
                                                     tmp_path, capsys):
        predictions = tmp_path / "preds.jsonl"
        predictions.write_text(json.dumps({"image_id": "imgX", "caption": "a dog"}),
                               encoding="utf-8")
        rc = main(["eval", "--metric", "chair", "--predictions", str(predictions),
                   "--annotations", str(annotations_file)])
        assert rc == 1
        assert "imgX" in capsys.readouterr().err


class TestBenchCommand:
    def test_report_schema_and_exit(self, trace_file, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        rc = main(["bench", "--trace", str(trace_file), "--lengths", "2,4",
                   "--repetitions", "3", "--out", str(out)])
        assert rc == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(BENCH_COLUMNS)
        assert len(lines) == 1 + 2 * 4  # two lengths, four variants

    def test_too_few_repetitions(self, trace_file, tmp_path, capsys):
        rc = main(["bench", "--trace", str(trace_file), "--repetitions", "2"])
        assert rc == 2
