"""End-to-end command-line tests; every command runs in-process via main()."""

import json

import pytest

from graph2comment import cli
from graph2comment.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main
from graph2comment.corpus import TokenizerConfig, load_corpus
from graph2comment.keywords import TextRankConfig, extract_keywords
from graph2comment.topic_graph import build_graph, parse_graph


def write_corpus(path, n=4, with_comments=True):
    """Tiny overfittable corpus: one lexicon keyword per article."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n):
            rec = {
                "id": f"art{i}",
                "title": f"k{i} news",
                "content": f"k{i} is here. all agree today.",
            }
            if with_comments:
                rec["comments"] = [f"great k{i} today"]
            fh.write(json.dumps(rec) + "\n")
    return str(path)


def write_lexicon(path, n=4):
    path.write_text("".join(f"k{i}\n" for i in range(n)), encoding="utf-8")
    return str(path)


def train_args(corpus, out, lexicon, extra=()):
    return ["train", "--corpus", corpus, "--out", out, "--lexicon", lexicon,
            "--epochs", "1", "--batch", "2", "--lr", "0.01", "--seed", "0",
            "--embed-dim", "8", "--heads", "2", "--sa-layers", "1",
            "--vocab-size", "64", "--dropout", "0.0", *extra]


@pytest.fixture
def corpus_file(tmp_path):
    return write_corpus(tmp_path / "corpus.jsonl")


@pytest.fixture
def lexicon_file(tmp_path):
    return write_lexicon(tmp_path / "lexicon.txt")


@pytest.fixture
def trained(tmp_path, corpus_file, lexicon_file):
    out = tmp_path / "run"
    code = main(train_args(corpus_file, str(out), lexicon_file))
    assert code == EXIT_OK
    return {"corpus": corpus_file, "lexicon": lexicon_file, "out": out,
            "checkpoint": str(out / "checkpoint.ckpt")}


class TestParsing:
    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0

    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == EXIT_USAGE

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_unknown_flag(self, capsys):
        assert main(["stats", "--nope", "x"]) == EXIT_USAGE

    def test_missing_required_flag(self, capsys):
        assert main(["stats", "--input", "whatever"]) == EXIT_USAGE
        assert "--out" in capsys.readouterr().err

    def test_bad_int_value(self, capsys):
        assert main(["train", "--epochs", "three"]) == EXIT_USAGE


class TestBuildGraph:
    def test_writes_dot_per_article(self, tmp_path, corpus_file, lexicon_file,
                                    capsys):
        out = tmp_path / "graphs"
        code = main(["build-graph", "--input", corpus_file, "--out", str(out),
                     "--lexicon", lexicon_file])
        assert code == EXIT_OK
        files = sorted(p.name for p in out.iterdir())
        assert files == [f"art{i}.dot" for i in range(4)]
        text = (out / "art0.dot").read_text(encoding="utf-8")
        assert text.startswith("graph")
        assert "wrote 4 graph file(s)" in capsys.readouterr().out

    def test_structured_output_round_trips(self, tmp_path, corpus_file,
                                           lexicon_file):
        out = tmp_path / "graphs"
        code = main(["build-graph", "--input", corpus_file, "--out", str(out),
                     "--format", "structured", "--lexicon", lexicon_file])
        assert code == EXIT_OK
        articles = load_corpus(corpus_file, TokenizerConfig())
        lexicon = frozenset(f"k{i}" for i in range(4))
        for art in articles:
            kw = extract_keywords(art, lexicon, TextRankConfig(), frozenset())
            expect = build_graph(art, kw)
            text = (out / f"{art.id}.json").read_text(encoding="utf-8")
            assert parse_graph(text) == expect

    def test_hostile_article_ids_become_safe_filenames(self, tmp_path):
        corpus = tmp_path / "c.jsonl"
        with open(corpus, "w", encoding="utf-8") as fh:
            for art_id in ("a/b", "a_b", "../evil"):
                fh.write(json.dumps({"id": art_id, "title": "t",
                                     "content": "t here."}) + "\n")
        out = tmp_path / "graphs"
        assert main(["build-graph", "--input", str(corpus),
                     "--out", str(out)]) == EXIT_OK
        names = sorted(p.name for p in out.iterdir())
        assert names == ["a_b.dot", "a_b_2.dot", ".._evil.dot"] or \
            names == sorted(["a_b.dot", "a_b_2.dot", ".._evil.dot"])
        assert all("/" not in n for n in names)

    def test_missing_input_is_data_error(self, tmp_path, capsys):
        assert main(["build-graph", "--input", str(tmp_path / "nope.jsonl"),
                     "--out", str(tmp_path / "g")]) == EXIT_DATA

    def test_lenient_skips_bad_lines(self, tmp_path, capsys):
        corpus = tmp_path / "c.jsonl"
        good = json.dumps({"id": "ok", "title": "t", "content": "t here."})
        corpus.write_text("this is not json\n" + good + "\n", encoding="utf-8")
        out = tmp_path / "g"
        assert main(["build-graph", "--input", str(corpus),
                     "--out", str(out)]) == EXIT_DATA
        assert main(["build-graph", "--input", str(corpus), "--out", str(out),
                     "--lenient"]) == EXIT_OK
        assert "warning" in capsys.readouterr().err
        assert [p.name for p in out.iterdir()] == ["ok.dot"]


class TestTrain:
    def test_outputs_and_log_shape(self, trained, capsys):
        out = trained["out"]
        assert (out / "checkpoint.ckpt").exists()
        assert (out / "checkpoint_epoch_0.ckpt").exists()
        lines = (out / "train_log.jsonl").read_text().splitlines()
        records = [json.loads(l) for l in lines]
        step_recs = [r for r in records if "loss" in r]
        epoch_recs = [r for r in records if "mean_loss" in r]
        assert len(step_recs) == 2  # 4 pairs, batch 2
        assert len(epoch_recs) == 1

    def test_zero_batch_is_usage_error(self, tmp_path, corpus_file,
                                       lexicon_file, capsys):
        args = train_args(corpus_file, str(tmp_path / "x"), lexicon_file)
        args[args.index("--batch") + 1] = "0"
        assert main(args) == EXIT_USAGE

    def test_corpus_without_comments_is_data_error(self, tmp_path,
                                                   lexicon_file, capsys):
        corpus = write_corpus(tmp_path / "nc.jsonl", with_comments=False)
        assert main(train_args(corpus, str(tmp_path / "x"),
                               lexicon_file)) == EXIT_DATA
        assert "pairs" in capsys.readouterr().err

    def test_max_steps_caps_optimizer_steps(self, tmp_path, corpus_file,
                                            lexicon_file, capsys):
        out = tmp_path / "capped"
        args = train_args(corpus_file, str(out), lexicon_file,
                          extra=["--max-steps", "1"])
        args[args.index("--epochs") + 1] = "3"
        assert main(args) == EXIT_OK
        records = [json.loads(l) for l in
                   (out / "train_log.jsonl").read_text().splitlines()]
        assert len([r for r in records if "loss" in r]) == 1

    def test_two_runs_identical_bytes(self, tmp_path, corpus_file,
                                      lexicon_file, capsys):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert main(train_args(corpus_file, str(out),
                                   lexicon_file)) == EXIT_OK
            outs.append(out)
        for fname in ("checkpoint.ckpt", "train_log.jsonl"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()

    def test_resume_matches_uninterrupted_run(self, tmp_path, corpus_file,
                                              lexicon_file, capsys):
        full = tmp_path / "full"
        args = train_args(corpus_file, str(full), lexicon_file)
        args[args.index("--epochs") + 1] = "2"
        assert main(args) == EXIT_OK

        part = tmp_path / "part"
        assert main(train_args(corpus_file, str(part),
                               lexicon_file)) == EXIT_OK
        resumed = tmp_path / "resumed"
        args = train_args(corpus_file, str(resumed), lexicon_file,
                          extra=["--resume", str(part / "checkpoint.ckpt")])
        args[args.index("--epochs") + 1] = "2"
        assert main(args) == EXIT_OK
        # Whole-file bytes differ only in the snapshotted hyperparams (the
        # resumed header keeps the original run's epochs); the state must match.
        from graph2comment.training import load_checkpoint
        a = load_checkpoint(str(full / "checkpoint.ckpt"))
        b = load_checkpoint(str(resumed / "checkpoint.ckpt"))
        assert (a.epoch, a.step, a.adam_t) == (b.epoch, b.step, b.adam_t)
        assert set(a.params) == set(b.params)
        for name in a.params:
            assert a.params[name].tobytes() == b.params[name].tobytes()
            assert a.adam_m[name].tobytes() == b.adam_m[name].tobytes()
            assert a.adam_v[name].tobytes() == b.adam_v[name].tobytes()


class TestGenerate:
    def gen(self, trained, tmp_path, name, extra=()):
        out = tmp_path / name
        code = main(["generate", "--checkpoint", trained["checkpoint"],
                     "--corpus", trained["corpus"], "--out", str(out), *extra])
        return code, out

    def test_record_shape(self, trained, tmp_path, capsys):
        code, out = self.gen(trained, tmp_path, "gen.jsonl")
        assert code == EXIT_OK
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert [r["id"] for r in records] == [f"art{i}" for i in range(4)]
        for r in records:
            assert set(r) == {"id", "comment", "score"}
            assert isinstance(r["comment"], str)
            assert isinstance(r["score"], float)

    def test_beam_one_matches_default(self, trained, tmp_path, capsys):
        _, greedy = self.gen(trained, tmp_path, "g.jsonl")
        _, beam1 = self.gen(trained, tmp_path, "b.jsonl", ["--beam", "1"])
        assert greedy.read_bytes() == beam1.read_bytes()

    def test_max_len_caps_comment(self, trained, tmp_path, capsys):
        _, out = self.gen(trained, tmp_path, "short.jsonl", ["--max-len", "1"])
        for line in out.read_text().splitlines():
            comment = json.loads(line)["comment"]
            assert len(comment.split()) <= 1

    def test_empty_corpus_gives_empty_output(self, trained, tmp_path, capsys):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("", encoding="utf-8")
        out = tmp_path / "none.jsonl"
        code = main(["generate", "--checkpoint", trained["checkpoint"],
                     "--corpus", str(empty), "--out", str(out)])
        assert code == EXIT_OK
        assert out.read_text() == ""
        assert "wrote 0 comment(s)" in capsys.readouterr().out

    def test_missing_checkpoint_is_data_error(self, tmp_path, corpus_file,
                                              capsys):
        assert main(["generate", "--checkpoint", str(tmp_path / "no.ckpt"),
                     "--corpus", corpus_file,
                     "--out", str(tmp_path / "o.jsonl")]) == EXIT_DATA

    def test_corrupt_checkpoint_is_data_error(self, tmp_path, corpus_file,
                                              capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"garbage bytes, not a checkpoint")
        assert main(["generate", "--checkpoint", str(bad), "--corpus",
                     corpus_file, "--out", str(tmp_path / "o.jsonl")]) == EXIT_DATA


def write_generated(path, comments):
    with open(path, "w", encoding="utf-8") as fh:
        for i, comment in enumerate(comments):
            fh.write(json.dumps({"id": f"a{i}", "comment": comment,
                                 "score": -1.0}) + "\n")
    return str(path)


class TestStats:
    def run_stats(self, tmp_path, comments, extra=(), capsys=None):
        gen = write_generated(tmp_path / "gen.jsonl", comments)
        out = tmp_path / "report"
        code = main(["stats", "--input", gen, "--out", str(out), *extra])
        return code, out

    def parse_stdout(self, capsys):
        lines = capsys.readouterr().out.splitlines()
        values = {}
        for line in lines:
            if "\t" in line:
                key, value = line.split("\t")
                values[key] = value
        return values

    def test_hand_computed_stats(self, tmp_path, capsys):
        code, out = self.run_stats(tmp_path, ["a b", "a c"])
        assert code == EXIT_OK
        values = self.parse_stdout(capsys)
        assert values["comments"] == "2"
        assert values["unique_tokens"] == "3"
        assert values["mean_length"] == "2.000000"
        assert values["distinct_ratio"] == "1.000000"
        tsv = (out / "stats.tsv").read_text(encoding="utf-8").splitlines()
        assert tsv[0] == "metric\tvalue"
        table = dict(l.split("\t") for l in tsv[1:])
        assert table["comments"] == "2"
        assert table["unique_tokens"] == "3"
        png = (out / "stats.png").read_bytes()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"

    def test_stopwords_excluded_from_uniques(self, tmp_path, capsys):
        sw = tmp_path / "sw.txt"
        sw.write_text("the\na\n", encoding="utf-8")
        code, _ = self.run_stats(tmp_path, ["the a", "a the"],
                                 extra=["--stopwords", str(sw)])
        assert code == EXIT_OK
        assert self.parse_stdout(capsys)["unique_tokens"] == "0"

    def test_duplicate_comments_halve_distinct_ratio(self, tmp_path, capsys):
        code, _ = self.run_stats(tmp_path, ["x y", "x y"])
        assert code == EXIT_OK
        assert self.parse_stdout(capsys)["distinct_ratio"] == "0.500000"

    def test_empty_input_reports_zeros(self, tmp_path, capsys):
        gen = tmp_path / "gen.jsonl"
        gen.write_text("", encoding="utf-8")
        assert main(["stats", "--input", str(gen),
                     "--out", str(tmp_path / "r")]) == EXIT_OK
        values = self.parse_stdout(capsys)
        assert values["comments"] == "0"
        assert values["mean_length"] == "0.000000"
        assert (tmp_path / "r" / "stats.png").exists()

    def test_malformed_input_is_data_error(self, tmp_path, capsys):
        gen = tmp_path / "gen.jsonl"
        gen.write_text("not json\n", encoding="utf-8")
        assert main(["stats", "--input", str(gen),
                     "--out", str(tmp_path / "r")]) == EXIT_DATA


class TestGradCheck:
    ARGS = ["grad-check", "--embed-dim", "8", "--samples", "8"]

    def test_passes_and_reports(self, capsys):
        assert main(self.ARGS) == EXIT_OK
        out = capsys.readouterr().out
        assert "max relative error" in out
        assert out.strip().endswith("PASS")

    def test_corrupted_backward_fails(self, capsys):
        assert main(self.ARGS + ["--corrupt-backward"]) == EXIT_VERIFY
        assert capsys.readouterr().out.strip().endswith("FAIL")

    def test_same_seed_same_report(self, capsys):
        assert main(self.ARGS + ["--seed", "5"]) == EXIT_OK
        first = capsys.readouterr().out
        assert main(self.ARGS + ["--seed", "5"]) == EXIT_OK
        assert capsys.readouterr().out == first


class TestConfigFile:
    def test_config_supplies_required_flags(self, tmp_path, corpus_file,
                                            capsys):
        cfg = tmp_path / "build.cfg"
        cfg.write_text(f"input={corpus_file}\n"
                       f"out={tmp_path / 'graphs'}\n"
                       "format=dot  # trailing comment\n", encoding="utf-8")
        assert main(["build-graph", "--config", str(cfg)]) == EXIT_OK
        assert (tmp_path / "graphs" / "art0.dot").exists()

    def test_explicit_flag_beats_config(self, tmp_path, corpus_file, capsys):
        cfg = tmp_path / "build.cfg"
        cfg.write_text(f"input={corpus_file}\nout={tmp_path / 'g'}\n"
                       "format=dot\n", encoding="utf-8")
        assert main(["build-graph", "--config", str(cfg),
                     "--format", "structured"]) == EXIT_OK
        assert (tmp_path / "g" / "art0.json").exists()

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("flux-capacitor=1\n", encoding="utf-8")
        assert main(["stats", "--config", str(cfg)]) == EXIT_USAGE
        assert "unknown config key" in capsys.readouterr().err

    def test_line_without_equals_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just a line\n", encoding="utf-8")
        assert main(["stats", "--config", str(cfg)]) == EXIT_USAGE

    def test_boolean_words(self, tmp_path, capsys):
        corpus = tmp_path / "c.jsonl"
        good = json.dumps({"id": "ok", "title": "t", "content": "t here."})
        corpus.write_text("broken\n" + good + "\n", encoding="utf-8")
        cfg = tmp_path / "b.cfg"
        cfg.write_text(f"input={corpus}\nout={tmp_path / 'g'}\nlenient=yes\n",
                       encoding="utf-8")
        assert main(["build-graph", "--config", str(cfg)]) == EXIT_OK
        cfg.write_text("lenient=maybe\n", encoding="utf-8")
        assert main(["build-graph", "--config", str(cfg)]) == EXIT_USAGE

    def test_missing_config_file_is_data_error(self, tmp_path, capsys):
        assert main(["stats", "--config", str(tmp_path / "no.cfg")]) == EXIT_DATA
