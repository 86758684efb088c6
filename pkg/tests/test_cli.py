import pytest

from twinrep.cli import CliError, main, read_suite
from twinrep.config import RunConfig
from twinrep.data import FIXTURES, write_tsv
from twinrep.trainer import read_metrics
from twinrep.vocab import Vocabulary

CFG = str(FIXTURES / "train.cfg")
SMALL = ["--total-steps", "8", "--hidden-dim", "16", "--num-heads", "2", "--ffn-dim", "32",
         "--num-layers", "1"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", CFG, "--out-dir", str(out), *SMALL]) == 0
    return out


class TestBuildVocab:
    def test_fixture_corpus(self, tmp_path, capsys):
        out = tmp_path / "v.txt"
        assert main(["build-vocab", "--nli", str(FIXTURES / "nli_train.tsv"), "--out", str(out)]) == 0
        vocab = Vocabulary.load(out)
        assert "guitar" in vocab and "entailment" not in vocab
        assert vocab.id_of(vocab.tokens[0]) == 4

    def test_missing_path(self, tmp_path, capsys):
        missing = tmp_path / "absent.txt"
        assert main(["build-vocab", str(missing), "--out", str(tmp_path / "v.txt")]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_min_count(self, tmp_path):
        corpus = tmp_path / "c.txt"
        corpus.write_text("a a b\nc a\n")
        out = tmp_path / "v.txt"
        assert main(["build-vocab", str(corpus), "--out", str(out), "--min-count", "2"]) == 0
        assert Vocabulary.load(out).tokens == ["a"]


class TestPreparePpdb:
    def test_outputs(self, tmp_path, capsys):
        args = ["prepare-ppdb", "--train", str(FIXTURES / "ppdb_train.tsv"),
                "--test", str(FIXTURES / "ppdb_test.tsv"), "--out-dir", str(tmp_path)]
        assert main(args) == 0
        ptc = (tmp_path / "ptc_train.tsv").read_text().splitlines()
        labels = {line.split("\t")[0] for line in ptc}
        assert labels == {"equivalence", "entailment", "independent"}
        assert len((tmp_path / "pi_positives.tsv").read_text().splitlines()) == len(ptc)
        test = (tmp_path / "phrase_test.tsv").read_text().splitlines()
        assert all(len(line.split("\t")) == 3 for line in test)
        assert main(args) == 0
        assert (tmp_path / "ptc_train.tsv").read_text().splitlines() == ptc


class TestTrain:
    def test_defaults_match_config_file(self):
        cfg = RunConfig.load(CFG)
        assert (cfg.batch_size, cfg.k, cfg.pooling.value, str(cfg.features)) == (16, 3, "mean", "u,v,|u-v|")
        assert RunConfig().batch_size == 16 and RunConfig().dropout == 0.1

    def test_artifacts(self, trained):
        assert {"final.ckpt", "metrics.csv", "vocab.txt", "best.ckpt"} <= {p.name for p in trained.iterdir()}
        rows = read_metrics(trained / "metrics.csv")
        assert len(rows) == 8
        header = [ln for ln in (trained / "metrics.csv").read_text().splitlines() if ln.startswith("#")]
        assert len(header) == len(RunConfig().items())

    def test_ablation_flags(self, tmp_path):
        out = tmp_path / "nli"
        args = ["train", CFG, "--out-dir", str(out), "--tasks", "nli", "--pooling", "max",
                "--features", "|u-v|,u*v", "--k", "1", *SMALL]
        assert main(args) == 0
        assert {r[1] for r in read_metrics(out / "metrics.csv")} == {"nli"}
        text = (out / "metrics.csv").read_text()
        assert "# pooling = max" in text and "# features = |u-v|,u*v" in text

    def test_seed_reproducible(self, tmp_path):
        logs = []
        for _ in range(2):
            assert main(["train", CFG, "--out-dir", str(tmp_path), "--seed", "7", *SMALL]) == 0
            logs.append((tmp_path / "metrics.csv").read_bytes())
        assert logs[0] == logs[1]

    @pytest.mark.parametrize("flags,field", [
        (["--tasks", "nli,xyz"], "tasks"),
        (["--k", "0"], "k"),
        (["--set", "bogus=1"], "bogus"),
        (["--set", "nli_train=/no/such/file.tsv"], "nli_train"),
    ])
    def test_bad_config(self, tmp_path, capsys, flags, field):
        assert main(["train", CFG, "--out-dir", str(tmp_path), *flags]) == 2
        assert field in capsys.readouterr().err


class TestEncode:
    def test_shape_and_purity(self, trained, tmp_path):
        inp = tmp_path / "in.txt"
        texts = ["big", "a man is playing a guitar", "big", "large dog", "", "x", "the cat", "big",
                 "a sad boy", "hundreds"]
        inp.write_text("\n".join(texts) + "\n")
        out = tmp_path / "out.tsv"
        assert main(["encode", str(trained / "final.ckpt"), str(inp), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 10
        assert all(len(line.split("\t")) == 16 for line in lines)
        assert lines[0] == lines[2] == lines[7]

    def test_incompatible_vocab(self, trained, tmp_path, capsys):
        other = tmp_path / "v.txt"
        other.write_text("completely\ndifferent\n")
        inp = tmp_path / "in.txt"
        inp.write_text("hello\n")
        code = main(["encode", str(trained / "final.ckpt"), str(inp), "--vocab", str(other)])
        assert code == 3


class TestEval:
    def test_single_dataset_row(self, trained, capsys):
        code = main(["eval", str(trained / "final.ckpt"), "--dataset", str(FIXTURES / "sts_fixture.tsv"),
                     "--name", "sts"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "dataset,metric,value,n"
        name, metric, value, n = lines[1].split(",")
        assert (name, metric, n) == ("sts", "spearman", "14") and -1 <= float(value) <= 1

    def test_suite(self, trained, tmp_path, capsys):
        out = tmp_path / "r.csv"
        code = main(["eval", str(trained / "final.ckpt"), "--suite", str(FIXTURES / "eval.suite"),
                     "--out", str(out), "--table"])
        assert code == 0
        rows = out.read_text().splitlines()[1:]
        assert [r.split(",")[0] for r in rows] == ["sts", "wordsim", "ppdb", "semeval"]
        assert "semeval  accuracy" in capsys.readouterr().out

    def test_undefined_correlation_exit_4(self, trained, tmp_path, capsys):
        flat = tmp_path / "flat.tsv"
        write_tsv(flat, [(1.0, "a man", "a dog"), (1.0, "big", "large"), (1.0, "the cat", "a cat")])
        code = main(["eval", str(trained / "final.ckpt"), "--dataset", str(flat)])
        assert code == 4
        assert "tied" in capsys.readouterr().err

    def test_suite_manifest_parsing(self, tmp_path):
        manifest = tmp_path / "m.suite"
        manifest.write_text("# comment\nfoo\tsimilarity\tdata/foo.tsv\n")
        assert read_suite(str(manifest)) == [("foo", "similarity", str(tmp_path / "data" / "foo.tsv"))]
        manifest.write_text("foo\tunknown\tx\n")
        with pytest.raises(CliError):
            read_suite(str(manifest))

    def test_requires_one_source(self, trained):
        assert main(["eval", str(trained / "final.ckpt")]) == 2
