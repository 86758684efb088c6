import numpy as np
import pytest

from twinrep.checkpoint import MAGIC, CheckpointError, load_checkpoint, read_header, save_checkpoint
from twinrep.encoder import EncoderConfig
from twinrep.model import FeatureMode, Pooling, Task, TwinModel
from twinrep.vocab import build_vocab

VOCAB = build_vocab(["one two three four five"])


def model(**kw):
    cfg = EncoderConfig(vocab_size=len(VOCAB), max_len=6, num_layers=2, num_heads=2, hidden_dim=8,
                        ffn_dim=12, share_layers=kw.pop("share_layers", False))
    return TwinModel(cfg, seed=3, **kw)


class TestRoundTrip:
    @pytest.mark.parametrize("kw", [
        {},
        {"pooling": Pooling.CLS, "features": FeatureMode.parse("|u-v|,u*v")},
        {"head_bias": False, "share_layers": True},
    ])
    def test_parameters_restored_exactly(self, tmp_path, kw):
        m = model(**kw)
        for p in m.parameters():
            p.data += np.random.default_rng(0).normal(size=p.shape)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, m, VOCAB, meta={"step": 7})
        loaded, meta = load_checkpoint(path, VOCAB)
        assert meta == {"step": 7}
        assert loaded.describe() == m.describe()
        for (na, a), (nb, b) in zip(m.named_parameters(), loaded.named_parameters()):
            assert na == nb
            np.testing.assert_array_equal(a.data, b.data)

    def test_same_predictions(self, tmp_path):
        m = model()
        save_checkpoint(tmp_path / "m.ckpt", m, VOCAB)
        loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
        ids = np.array([[2, 5, 6, 3, 0, 0]])
        mask = (ids != 0).astype(int)
        np.testing.assert_array_equal(m.predict_proba(Task.PTC, ids, mask, ids, mask),
                                      loaded.predict_proba(Task.PTC, ids, mask, ids, mask))

    def test_bytes_deterministic(self, tmp_path):
        save_checkpoint(tmp_path / "a", model(), VOCAB)
        save_checkpoint(tmp_path / "b", model(), VOCAB)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_header_layout(self, tmp_path):
        save_checkpoint(tmp_path / "m.ckpt", model(), VOCAB)
        text = (tmp_path / "m.ckpt").read_bytes().split(b"\nend\n")[0].decode()
        assert text.splitlines()[0] == MAGIC
        desc, sha, _, tensors, _ = read_header(tmp_path / "m.ckpt")
        assert sha == VOCAB.fingerprint()
        assert desc["encoder"]["hidden_dim"] == 8
        assert tensors[0][:2] == ("embed.token", (len(VOCAB), 8))


class TestIncompatible:
    def test_other_vocabulary(self, tmp_path):
        save_checkpoint(tmp_path / "m.ckpt", model(), VOCAB)
        with pytest.raises(CheckpointError, match="fingerprint"):
            load_checkpoint(tmp_path / "m.ckpt", build_vocab(["six seven eight nine ten"]))

    def test_not_a_checkpoint(self, tmp_path):
        (tmp_path / "x").write_text("hello\n")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "x")

    def test_truncated_payload(self, tmp_path):
        save_checkpoint(tmp_path / "m.ckpt", model(), VOCAB)
        blob = (tmp_path / "m.ckpt").read_bytes()
        (tmp_path / "m.ckpt").write_bytes(blob[:-16])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(tmp_path / "m.ckpt")

    def test_missing_tensor(self, tmp_path):
        save_checkpoint(tmp_path / "m.ckpt", model(), VOCAB)
        blob = (tmp_path / "m.ckpt").read_bytes()
        head, payload = blob.split(b"\nend\n", 1)
        lines = [ln for ln in head.split(b"\n") if not ln.startswith(b"tensor head.pi.bias")]
        (tmp_path / "m.ckpt").write_bytes(b"\n".join(lines) + b"\nend\n" + payload)
        with pytest.raises(CheckpointError, match="tensor set"):
            load_checkpoint(tmp_path / "m.ckpt")
