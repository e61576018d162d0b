import json

import pytest

from conftest import make_embedding, make_separable_groups
from verseqa import cli
from verseqa.data import read_groups, write_groups
from verseqa.embeddings import save_embedding


@pytest.fixture
def bible_tsv(tmp_path):
    lines = []
    for t in ("KJV", "WEB"):
        for v in range(1, 13):
            lines.append(f"{t}\tMatthew\t1\t{v}\tVerse {v} words in {t} here")
    path = tmp_path / "bible.tsv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def trivia_tsv(tmp_path):
    lines = [f"Question {i}?\tanswer\tMatthew\t1\t{i + 1}" for i in range(11)]
    path = tmp_path / "trivia.tsv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def dataset_jsonl(tmp_path):
    path = tmp_path / "data.jsonl"
    write_groups(path, make_separable_groups(15, seed=0))
    return str(path)


@pytest.fixture
def embeddings_txt(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("\n".join(save_embedding(make_embedding(dim=8))) + "\n")
    return str(path)


class TestBuildDataset:
    def test_emits_questions_times_translations(self, bible_tsv, trivia_tsv, tmp_path):
        out = tmp_path / "out.jsonl"
        rc = cli.main(["build-dataset", "--bible", bible_tsv, "--trivia", trivia_tsv,
                       "--mode", "window-3", "--out", str(out)])
        assert rc == 0
        groups = read_groups(out)
        assert len(groups) == 11 * 2
        assert all(len(g.candidates) == 3 for g in groups)
        assert all(sum(c.label for c in g.candidates) == 1 for g in groups)

    def test_missing_input_exits_3(self, trivia_tsv, tmp_path):
        rc = cli.main(["build-dataset", "--bible", "nope.tsv",
                       "--trivia", trivia_tsv, "--out", str(tmp_path / "x")])
        assert rc == 3


class TestEvaluate:
    def test_baseline_rerun_is_byte_identical(self, dataset_jsonl, tmp_path):
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        for out in (out1, out2):
            rc = cli.main(["evaluate", "--model", "baseline", "--data",
                           dataset_jsonl, "--seed", "7", "--out", str(out)])
            assert rc == 0
        assert out1.read_bytes() == out2.read_bytes()
        report = json.loads(out1.read_text())
        assert report["seed"] == 7 and report["n"] == 15

    def test_trained_model_needs_checkpoint(self, dataset_jsonl):
        rc = cli.main(["evaluate", "--model", "rnn", "--data", dataset_jsonl])
        assert rc == 3


class TestTrain:
    def _train(self, dataset_jsonl, embeddings_txt, out, seed="3"):
        return cli.main([
            "train", "--model", "cnn", "--data", dataset_jsonl,
            "--embeddings", embeddings_txt, "--dim", "8",
            "--hidden", "4", "--conv-window", "2", "--max-epochs", "2",
            "--batch-size", "8", "--seed", seed, "--out", str(out)])

    def test_train_writes_checkpoint_and_report(self, dataset_jsonl,
                                                embeddings_txt, tmp_path, capsys):
        out = tmp_path / "model.ckpt"
        assert self._train(dataset_jsonl, embeddings_txt, out) == 0
        assert out.read_bytes()[:4] == b"BQAC"
        report = json.loads(capsys.readouterr().out)
        assert 0.0 <= report["f1"] <= 1.0

    def test_rerun_is_byte_identical(self, dataset_jsonl, embeddings_txt,
                                     tmp_path, capsys):
        outs = []
        reports = []
        for name in ("a.ckpt", "b.ckpt"):
            out = tmp_path / name
            assert self._train(dataset_jsonl, embeddings_txt, out) == 0
            outs.append(out.read_bytes())
            reports.append(capsys.readouterr().out)
        assert outs[0] == outs[1]
        assert reports[0] == reports[1]

    def test_missing_data_exits_3(self, embeddings_txt, tmp_path):
        rc = cli.main(["train", "--model", "rnn", "--data", "missing.jsonl",
                       "--embeddings", embeddings_txt, "--out",
                       str(tmp_path / "x.ckpt")])
        assert rc == 3


class TestTransferTrain:
    def test_round_trip(self, dataset_jsonl, embeddings_txt, tmp_path, capsys):
        base = tmp_path / "base.ckpt"
        common = ["--model", "rnn", "--data", dataset_jsonl,
                  "--embeddings", embeddings_txt, "--dim", "8",
                  "--hidden", "4", "--max-epochs", "1", "--seed", "1"]
        assert cli.main(["train", *common, "--out", str(base)]) == 0
        capsys.readouterr()
        tuned = tmp_path / "tuned.ckpt"
        assert cli.main(["transfer-train", *common, "--pretrained", str(base),
                         "--out", str(tuned)]) == 0
        assert tuned.read_bytes()[:4] == b"BQAC"


class TestNearest:
    def test_lists_neighbors(self, embeddings_txt, capsys):
        rc = cli.main(["nearest", "--embeddings", embeddings_txt, "--dim", "8",
                       "--word", "k0", "-k", "3"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        # key tokens share a direction, so neighbors of a key are keys
        assert all(line.split("\t")[0].startswith(("k", "m")) for line in lines)

    def test_unknown_word_exits_3(self, embeddings_txt):
        assert cli.main(["nearest", "--embeddings", embeddings_txt, "--dim", "8",
                         "--word", "zzz"]) == 3


class TestUsageAndConfig:
    def test_unknown_command_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["build-dataset", "--bible", "b.tsv"])
        assert exc.value.code == 2

    def test_config_file_supplies_flags_and_cli_wins(self, dataset_jsonl,
                                                     tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "baseline", "data": dataset_jsonl,
                                   "seed": 5}))
        rc = cli.main(["--config", str(cfg), "evaluate", "--seed", "9"])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["seed"] == 9  # CLI beats the file
        assert report["model"] == "baseline"


class TestConvertSpan:
    def test_end_to_end(self, tmp_path):
        spans = tmp_path / "spans.jsonl"
        ctx = "First part here. The answer is inside. Last sentence."
        spans.write_text(json.dumps({
            "context": ctx, "question": "Where?", "answer_text": "answer",
            "answer_start": ctx.index("answer")}) + "\n")
        out = tmp_path / "out.jsonl"
        rc = cli.main(["convert-span", "--in", str(spans), "--out", str(out)])
        assert rc == 0
        (g,) = read_groups(out)
        assert [c.label for c in g.candidates] == [0, 1, 0]


class TestTrainEmbeddings:
    def test_writes_vectors(self, bible_tsv, tmp_path):
        out = tmp_path / "vec.txt"
        rc = cli.main(["train-embeddings", "--bible", bible_tsv, "--out",
                       str(out), "--dim", "6", "--window", "2",
                       "--epochs", "2"])
        assert rc == 0
        first = out.read_text().splitlines()[0].split(" ")
        assert len(first) == 7  # token + 6 components
