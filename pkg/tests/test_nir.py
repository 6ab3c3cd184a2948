import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from papforge.nir import (CONTEXT_DIM, EMBED_DIM, MAX_LEN, NIR, FingerprintMismatch, SharedWeights, decode, encode,
                          gradient_check, load_shared, nir_evaluate, nir_loss, pretrain_seq2seq,
                          reconstruction_accuracy, sample_dataset, save_seq2seq, save_shared, scorer_size,
                          scorer_weights, shared_digest, train_nirs)
from papforge.nir import model as M
from papforge.nir.checkpoint import load_seq2seq_into
from papforge.problems import generate_instance
from papforge.problems.base import random_bits


@pytest.fixture(scope="module")
def sw2():
    return SharedWeights.initialize(2, seed=0)


@pytest.fixture(scope="module")
def trained_mkp():
    inst = generate_instance("MKP", 16, "train", 1)
    sw = SharedWeights.initialize(2, seed=1)
    ds = sample_dataset(inst, 600, seed=2, instance_id="mkp")
    embs, rep = train_nirs(sw, [ds], epochs=60, batch=128, seed=3)
    return inst, sw, ds, NIR(sw, embs[0], inst.dim, ds.mean, ds.std, inst, "mkp"), rep


def test_scorer_sizes():
    assert scorer_size(2) == 49666
    assert scorer_size(3) == 49795
    for n in (2, 3):
        sw = SharedWeights.initialize(n, seed=0)
        assert sw.params["hyper.W2"].shape[1] == 49408 + 129 * n
    bad = SharedWeights.initialize(2, seed=0).params
    bad = {**bad, "hyper.W2": bad["hyper.W2"][:, :-1]}
    with pytest.raises(AssertionError):
        SharedWeights(2, bad)


def test_encode_fixed_width_and_deterministic(sw2):
    rng = np.random.default_rng(0)
    for L in (32, 64):
        X = random_bits(rng, 3, L)
        c = encode(sw2, X)
        assert c.shape == (3, CONTEXT_DIM)
        np.testing.assert_array_equal(c, encode(sw2, X))


def test_zero_weights_give_zero_context():
    sw = SharedWeights.initialize(2, seed=0)
    for k in sw.params:
        sw.params[k] = np.zeros_like(sw.params[k])
    c = encode(sw, random_bits(np.random.default_rng(0), 4, 10))
    np.testing.assert_array_equal(c, 0.0)


def test_decode_probabilities_and_cap(sw2):
    c = encode(sw2, random_bits(np.random.default_rng(1), 5, 12))
    toks, probs = decode(sw2, c)
    np.testing.assert_allclose(probs.sum(axis=2), 1.0, atol=1e-6)
    assert toks.shape[1] <= MAX_LEN
    toks, _ = decode(sw2, c, max_len=500)
    assert toks.shape[1] <= MAX_LEN


def test_zero_embedding_and_biases_give_zero_scorer():
    sw = SharedWeights.initialize(3, seed=0)
    sw.params["hyper.b1"][:] = 0
    sw.params["hyper.b2"][:] = 0
    w = scorer_weights(sw, np.zeros(EMBED_DIM, dtype=np.float32))
    assert all(np.all(v == 0) for v in w.values())
    assert sum(v.size for v in w.values()) == 49795


def test_variable_length_contract(sw2):
    m = NIR(sw2, np.ones(EMBED_DIM), 8, [0, 0], [1, 1])
    rng = np.random.default_rng(0)
    for L in (1, 7, 64, 128):
        y = nir_evaluate(m, random_bits(rng, 2, L))
        assert y.shape == (2, 2) and np.all(np.isfinite(y))
    with pytest.raises(ValueError):
        m.evaluate(np.zeros(129, dtype=np.uint8))


def test_shared_specific_decoupling(sw2):
    rng = np.random.default_rng(2)
    a = NIR(sw2, rng.normal(size=EMBED_DIM), 10, [0, 0], [1, 1], instance_id="a")
    b = NIR(sw2, rng.normal(size=EMBED_DIM), 10, [0, 0], [1, 1], instance_id="b")
    X = random_bits(rng, 20, 10)
    yb = b.evaluate(X).copy()
    a2 = a.with_embedding(a.embedding + 1.0, "a2")
    assert not np.allclose(a2.evaluate(X), a.evaluate(X))
    np.testing.assert_array_equal(b.evaluate(X), yb)
    assert a2.parent_id == "a"


def test_loss_decomposition(sw2):
    rng = np.random.default_rng(3)
    X = random_bits(rng, 4, 9)
    Yz = rng.normal(size=(4, 2)).astype(np.float32)
    e = rng.normal(size=EMBED_DIM).astype(np.float32)
    parts, _ = nir_loss(sw2, e, X, Yz, 1.0, 2, need_grad=False)
    assert parts.total == pytest.approx(parts.mse + parts.reconstruction)
    assert parts.reconstruction > 0
    no_rec, _ = nir_loss(sw2, e, X, Yz, 0.0, 2, need_grad=False)
    assert no_rec.reconstruction == 0.0 and no_rec.mse == pytest.approx(parts.mse)
    # the reconstruction weight is divided by the number of instances
    four, _ = nir_loss(sw2, e, X, Yz, 1.0, 4, need_grad=False)
    assert four.reconstruction == pytest.approx(parts.reconstruction / 2, rel=1e-5)


@pytest.mark.parametrize("blocks", [["hyper.W1", "hyper.W2", "e"], ["enc1.Wh", "dec0.Wx", "out.W", "tok_emb"]])
def test_gradient_check_selected_blocks(blocks):
    sw = SharedWeights.initialize(2, seed=4)
    rng = np.random.default_rng(4)
    X = random_bits(rng, 3, 6)
    err = gradient_check(sw, rng.normal(size=EMBED_DIM), X, rng.normal(size=(3, 2)), n_coords=24, blocks=blocks)
    assert max(err.values()) < 1e-4, err


def test_sample_dataset(tmp_path):
    inst = generate_instance("MKP", 12, "train", 0)
    a = sample_dataset(inst, 300, seed=5)
    b = sample_dataset(inst, 300, seed=5)
    np.testing.assert_array_equal(a.X, b.X)
    assert np.all(inst.is_feasible(a.X))
    np.testing.assert_array_equal(a.Y, inst.evaluate(a.X))
    np.testing.assert_allclose(a.Z.mean(axis=0), 0, atol=1e-9)
    assert len(a.samples()) == 300
    with pytest.raises(ValueError):
        sample_dataset(inst, 0)


def test_pretraining_loss_decreases_early():
    sw = SharedWeights.initialize(2, seed=6)
    rep = pretrain_seq2seq(sw, min_len=8, max_len=16, steps=100, batch=32, seed=6, eval_every=10_000)
    losses = [h[2] for h in rep.history]
    assert np.mean(losses[-20:]) < np.mean(losses[:20])


def test_training_reduces_mse_on_small_mmmp():
    inst = generate_instance("MMMP", 8, "train", 0)
    sw = SharedWeights.initialize(3, seed=0)
    ds = sample_dataset(inst, 500, seed=1)
    _, rep = train_nirs(sw, [ds], epochs=200, batch=1024, seed=2)
    assert rep.final_mse <= 0.5 * rep.initial_mse


def test_trained_nir_sanity(trained_mkp):
    inst, sw, ds, m, rep = trained_mkp
    assert rep.final_mse < rep.initial_mse
    X = inst.repair(random_bits(np.random.default_rng(99), 300, inst.dim))
    held = float((((m.predict_standardized(X) - (inst.evaluate(X) - ds.mean) / ds.std)) ** 2).mean(axis=1).mean())
    assert held < 3 * rep.final_mse
    Xr = X[:, ::-1].copy()
    assert not np.allclose(m.evaluate(X), m.evaluate(Xr))
    np.testing.assert_array_equal(m.evaluate(X), m.evaluate(X))


def test_checkpoint_roundtrip(tmp_path, trained_mkp):
    _, sw, ds, m, _ = trained_mkp
    p = tmp_path / "w.npz"
    save_shared(p, sw, {"mkp": {"e": m.embedding, "mean": ds.mean, "std": ds.std}}, {"note": "x"})
    back, emb, meta = load_shared(p)
    assert shared_digest(back) == shared_digest(sw)
    np.testing.assert_array_equal(emb["mkp"]["e"], m.embedding)
    assert meta == {"note": "x"}
    with pytest.raises(FingerprintMismatch):
        load_shared(p, expect={"n_obj": 3})
    q = tmp_path / "s2s.npz"
    save_seq2seq(q, sw, {"steps": 1})
    fresh = SharedWeights.initialize(2, seed=9)
    assert load_seq2seq_into(q, fresh) == {"steps": 1}
    np.testing.assert_array_equal(fresh.params["enc0.Wx"], sw.params["enc0.Wx"])
    assert not np.array_equal(fresh.params["hyper.W2"], sw.params["hyper.W2"])


def test_batch_invariant_encoding(sw2):
    X = random_bits(np.random.default_rng(7), 70, 20)
    sw = sw2.copy()
    whole = sw.encode_cached(X)
    sw.invalidate_cache()
    parts = np.concatenate([sw.encode_cached(X[:5]), sw.encode_cached(X[5:])])
    np.testing.assert_array_equal(whole, parts)


@settings(max_examples=20, deadline=None)
@given(L=st.integers(1, 40), seed=st.integers(0, 1000))
def test_reconstruction_accuracy_in_unit_interval(L, seed):
    sw = SharedWeights.initialize(2, seed=seed % 3)
    acc = reconstruction_accuracy(sw, range(L, L + 1), 2, seed=seed)
    assert 0.0 <= acc <= 1.0


def test_context_split_roundtrip():
    c = np.arange(2 * CONTEXT_DIM, dtype=np.float32).reshape(2, CONTEXT_DIM)
    h0, h1 = M.split_context(c)
    np.testing.assert_array_equal(np.concatenate([h0, h1], axis=1), c)
