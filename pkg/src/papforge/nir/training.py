"""Training for the neural instance representation.

Two phases:

* ``pretrain_seq2seq`` fits the encoder/decoder as an autoencoder on uniform
  random bit strings (no problem data involved);
* ``train_nirs`` then jointly fits all weights plus one embedding per
  instance on the objective-regression loss with a reconstruction penalty.

Every gradient here is written out by hand; ``gradient_check`` compares them
with central finite differences.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from papforge.nir import layers
from papforge.nir import model as M
from papforge.problems.base import random_bits


class TrainingDiverged(FloatingPointError):
    pass


# ---------------------------------------------------------------- data

@dataclass
class TrainingSample:
    x: np.ndarray
    y: np.ndarray


@dataclass
class Dataset:
    """Repaired random solutions of one instance with their true objectives."""

    instance_id: str
    X: np.ndarray
    Y: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    @property
    def Z(self) -> np.ndarray:
        return (self.Y - self.mean) / self.std

    def samples(self):
        return [TrainingSample(x, y) for x, y in zip(self.X, self.Y)]

    def __len__(self):
        return len(self.X)


def sample_dataset(instance, count: int = 10_000, seed: int = 0, instance_id: str | None = None) -> Dataset:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    X = instance.repair(random_bits(rng, count, instance.dim))
    Y = np.asarray(instance.evaluate(X), dtype=np.float64).reshape(count, -1)
    mean = Y.mean(axis=0)
    std = Y.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    if instance_id is None:
        instance_id = f"{getattr(instance, 'problem_class', 'inst')}-{getattr(instance, 'seed', 0)}"
    return Dataset(instance_id, X, Y, mean, std)


# ---------------------------------------------------------------- losses

def reconstruction_loss(sw: M.SharedWeights, X: np.ndarray, include_eos: bool = True):
    """Mean token cross-entropy with teacher forcing, plus grads and token accuracy."""
    B, L = X.shape
    c, ecache = M.encode_forward(sw, X)
    logits, dcache = M.decode_forward(sw, c, X)
    T = L + 1 if include_eos else L
    tgt = np.concatenate([X.astype(np.int64), np.full((B, 1), M.EOS)], axis=1)[:, :T]
    lp = layers.log_softmax(logits[:, :T])
    picked = np.take_along_axis(lp, tgt[..., None], axis=2)[..., 0]
    loss = -picked.mean()
    acc = float((logits[:, :L, :2].argmax(-1) == X).mean())
    d = np.zeros_like(logits)
    p = np.exp(lp)
    np.put_along_axis(p, tgt[..., None], np.take_along_axis(p, tgt[..., None], axis=2) - 1, axis=2)
    d[:, :T] = p / (B * T)
    dc, g = M.decode_backward(sw, d.astype(sw.dtype), dcache)
    ge = M.encode_backward(sw, dc, ecache)
    g["tok_emb"] = g["tok_emb"] + ge.pop("tok_emb")
    g.update(ge)
    return float(loss), acc, g


@dataclass
class LossParts:
    total: float
    mse: float
    reconstruction: float


def nir_loss(sw: M.SharedWeights, e: np.ndarray, X: np.ndarray, Yz: np.ndarray, lam: float, n_instances: int,
             need_grad: bool = True):
    """Loss of one same-instance batch, summed over its samples.

    Per sample: mean squared error over objectives, minus (lam / n_instances)
    times the mean log-probability the decoder assigns to the input bits.
    Returns ``(LossParts, grads)`` where ``grads`` also holds ``"e"``.
    """
    B, L = X.shape
    c, ecache = M.encode_forward(sw, X)
    logits, dcache = M.decode_forward(sw, c, X)
    flat, hcache = M.hyper_forward(sw, e)
    w = M.unflatten_scorer(flat, sw.n_obj)
    yhat, scache = M.scorer_forward(w, c)
    n = yhat.shape[1]
    err = yhat - Yz
    mse = float((err ** 2).mean(axis=1).sum())
    lp = layers.log_softmax(logits[:, :L])
    tgt = X.astype(np.int64)[..., None]
    ll = np.take_along_axis(lp, tgt, axis=2)[..., 0].sum(axis=1)
    coef = lam / n_instances
    rec = float(-coef * (ll / L).sum())
    parts = LossParts(mse + rec, mse, rec)
    if not need_grad:
        return parts, None
    dy = (2.0 / n) * err
    dc_s, gs = M.scorer_backward(w, dy.astype(sw.dtype), scache)
    de, grads = M.hyper_backward(sw, M.flatten_scorer(gs, sw.n_obj), hcache)
    p = np.exp(lp)
    np.put_along_axis(p, tgt, np.take_along_axis(p, tgt, axis=2) - 1, axis=2)
    dlogits = np.zeros_like(logits)
    dlogits[:, :L] = p * (coef / L)
    dc_d, gd = M.decode_backward(sw, dlogits.astype(sw.dtype), dcache)
    ge = M.encode_backward(sw, (dc_s + dc_d).astype(sw.dtype), ecache)
    grads.update(gd)
    grads["tok_emb"] = grads["tok_emb"] + ge.pop("tok_emb")
    grads.update(ge)
    grads["e"] = de
    return parts, grads


# ---------------------------------------------------------------- optimizers

def cosine_lr(step: int, total: int, lr_max: float, lr_min: float) -> float:
    if total <= 1:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * step / (total - 1)))


class Adam:
    def __init__(self, params: dict, keys, lr: float = 2e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.keys = list(keys)
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(params[k]) for k in self.keys}
        self.v = {k: np.zeros_like(params[k]) for k in self.keys}
        self.t = 0

    def step(self, params: dict, grads: dict, scale: float = 1.0) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k in self.keys:
            g = grads[k] * scale
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            upd = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            params[k] -= upd.astype(params[k].dtype)


def grad_norm(grads: dict, keys) -> float:
    return float(np.sqrt(sum(float((grads[k].astype(np.float64) ** 2).sum()) for k in keys)))


# ---------------------------------------------------------------- pretraining

SEQ2SEQ_KEYS = ("tok_emb", "enc0.Wx", "enc0.Wh", "enc0.bx", "enc0.bh", "enc1.Wx", "enc1.Wh", "enc1.bx",
                "enc1.bh", "dec0.Wx", "dec0.Wh", "dec0.bx", "dec0.bh", "dec1.Wx", "dec1.Wh", "dec1.bx",
                "dec1.bh", "out.W", "out.b")


@dataclass
class PretrainReport:
    steps: int
    reached_len: int
    accuracy: float
    converged: bool
    history: list = field(default_factory=list)
    seconds: float = 0.0


def reconstruction_accuracy(sw: M.SharedWeights, lengths=range(8, 65), per_length: int = 32, seed: int = 0) -> float:
    """Exact-token accuracy of free-running greedy decoding on fresh random strings.

    Positions the decoder fails to emit (stopping early) count as errors.
    """
    rng = np.random.default_rng(seed)
    right = total = 0
    for L in lengths:
        X = random_bits(rng, per_length, L)
        toks, _ = M.greedy_decode(sw, M.encode(sw, X), max_len=M.MAX_LEN)
        T = min(L, toks.shape[1])
        right += int((toks[:, :T] == X[:, :T]).sum())
        total += per_length * L
    return right / total


def pretrain_seq2seq(sw: M.SharedWeights, min_len: int = 8, max_len: int = 64, steps: int = 40_000,
                     batch: int = 64, lr: float = 2e-3, seed: int = 0, target: float = 0.99,
                     curriculum_step: int = 8, window: int = 50, eval_every: int = 1000, clip: float = 1.0,
                     lr_decay: float = 0.5, patience: int = 2, min_lr: float = 1e-5, start_len: int | None = None,
                     log=None, checkpoint=None) -> PretrainReport:
    """Fit encoder and decoder as an autoencoder of random bit strings.

    The admissible length range grows by ``curriculum_step`` whenever the
    running teacher-forced token accuracy exceeds ``target``.  Every
    ``eval_every`` steps at full length a held-out greedy check runs; training
    stops as soon as it reaches ``target``.  After ``patience`` checks without
    a new best the learning rate is multiplied by ``lr_decay``.  Updates
    ``sw`` in place.
    """
    rng = np.random.default_rng(seed)
    opt = Adam(sw.params, SEQ2SEQ_KEYS, lr=lr)
    cur = min(max_len, min_len + curriculum_step) if min_len < max_len else max_len
    if start_len is not None:
        cur = min(max_len, max(cur, start_len))
    accs: list[float] = []
    hist = []
    t0 = time.time()
    held = best = 0.0
    stale = 0
    step = 0
    for step in range(1, steps + 1):
        L = int(rng.integers(min_len, cur + 1))
        X = random_bits(rng, batch, L)
        loss, acc, g = reconstruction_loss(sw, X)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"pretraining loss became {loss} at step {step}")
        gn = grad_norm(g, SEQ2SEQ_KEYS)
        opt.step(sw.params, g, scale=min(1.0, clip / max(gn, 1e-12)))
        accs.append(acc)
        hist.append((step, L, loss, acc))
        if step % window == 0:
            run = float(np.mean(accs[-window:]))
            if log:
                log(f"step {step} len<={cur} loss {loss:.4f} acc {run:.4f} t {time.time() - t0:.0f}s")
            if run > target and cur < max_len:
                cur = min(max_len, cur + curriculum_step)
        if cur == max_len and step % eval_every == 0:
            held = reconstruction_accuracy(sw, range(min_len, max_len + 1), 8, seed=derive(seed, step))
            if log:
                log(f"step {step} held-out greedy accuracy {held:.4f} lr {opt.lr:.2e}")
            if checkpoint:
                checkpoint(sw, step)
            if held >= target:
                break
            if held > best:
                best, stale = held, 0
            else:
                stale += 1
                if stale >= patience:
                    opt.lr, stale = max(min_lr, opt.lr * lr_decay), 0
    sw.invalidate_cache()
    return PretrainReport(step, cur, held, held >= target, hist, time.time() - t0)


def derive(seed: int, step: int) -> int:
    return (seed * 1_000_003 + step) % (2 ** 31)


# ---------------------------------------------------------------- joint training

@dataclass
class TrainReport:
    history: list
    initial_mse: float
    final_mse: float
    seconds: float


def epoch_mse(sw: M.SharedWeights, embeddings, datasets, chunk: int = 1024) -> float:
    """Mean per-sample standardized MSE over all datasets (no reconstruction term)."""
    tot, n = 0.0, 0
    for e, ds in zip(embeddings, datasets):
        Z = ds.Z
        w = M.scorer_weights(sw, e)
        for s in range(0, len(ds), chunk):
            c = M.encode(sw, ds.X[s:s + chunk])
            y, _ = M.scorer_forward(w, c)
            tot += float(((y - Z[s:s + chunk]) ** 2).mean(axis=1).sum())
            n += len(c)
    return tot / n


def train_nirs(sw: M.SharedWeights, datasets: list, epochs: int = 5000, batch: int = 1024,
               lr=(0.002, 0.0005), lam: float = 1.0, seed: int = 0, embeddings=None, reinit_hyper: bool = True,
               max_grad_norm: float | None = 100.0, log=None, log_every: int = 1):
    """Joint gradient descent over shared weights and per-instance embeddings.

    Batches never mix instances (one sequence length per batch).  The
    learning rate is cosine-annealed from ``lr[0]`` to ``lr[1]`` across all
    steps; updates are plain gradient steps on the summed batch loss.  The
    summed loss grows with the batch, so the joint gradient (all shared
    blocks plus the embedding) is rescaled to norm ``max_grad_norm`` when
    larger; ``None`` disables this.
    Returns ``(embeddings, TrainReport)``; ``sw`` is updated in place.
    """
    if not datasets:
        raise ValueError("need at least one dataset")
    rng = np.random.default_rng(seed)
    if reinit_hyper:
        sw.params.update(M.init_hypernet(rng, sw.n_obj, sw.dtype))
    if embeddings is None:
        embeddings = [M.init_embedding(rng, sw.dtype) for _ in datasets]
    embeddings = [np.array(e, dtype=sw.dtype) for e in embeddings]
    n_inst = len(datasets)
    plan = [(i, s) for i, ds in enumerate(datasets) for s in range(0, len(ds), batch)]
    total_steps = epochs * len(plan)
    t0 = time.time()
    initial = epoch_mse(sw, embeddings, datasets)
    hist = [(0, initial, float("nan"))]
    step = 0
    for ep in range(1, epochs + 1):
        order = rng.permutation(len(plan))
        perms = [rng.permutation(len(ds)) for ds in datasets]
        ep_mse = ep_rec = 0.0
        for j in order:
            i, s = plan[j]
            ds = datasets[i]
            idx = perms[i][s:s + batch]
            parts, g = nir_loss(sw, embeddings[i], ds.X[idx], ds.Z[idx].astype(sw.dtype), lam, n_inst)
            if not np.isfinite(parts.total):
                raise TrainingDiverged(f"loss became {parts.total} at epoch {ep}, instance {ds.instance_id}")
            lr_t = cosine_lr(step, total_steps, *lr)
            if max_grad_norm is not None:
                gn = grad_norm(g, list(g))
                if gn > max_grad_norm:
                    lr_t *= max_grad_norm / gn
            embeddings[i] -= (lr_t * g.pop("e")).astype(sw.dtype)
            for k, v in g.items():
                sw.params[k] -= (lr_t * v).astype(sw.dtype)
            ep_mse += parts.mse
            ep_rec += parts.reconstruction
            step += 1
        n_total = sum(len(d) for d in datasets)
        hist.append((ep, ep_mse / n_total, ep_rec / n_total))
        if log and ep % log_every == 0:
            log(f"epoch {ep} mse {ep_mse / n_total:.4f} rec {ep_rec / n_total:.4f} t {time.time() - t0:.0f}s")
    sw.invalidate_cache()
    final = epoch_mse(sw, embeddings, datasets)
    return embeddings, TrainReport(hist, initial, final, time.time() - t0)


# ---------------------------------------------------------------- gradient check

def gradient_check(sw: M.SharedWeights, e: np.ndarray, X: np.ndarray, Yz: np.ndarray, lam: float = 1.0,
                   n_instances: int = 1, h: float = 1e-5, n_coords: int = 64, seed: int = 0,
                   blocks=None) -> dict:
    """Relative error ||numeric - analytic|| / max(||numeric||, ||analytic||) per weight block.

    Both gradients are taken on the same random subset of ``n_coords``
    coordinates of each block.  Runs in float64 on a copy of ``sw``.
    """
    sw = sw.astype(np.float64)
    e = np.asarray(e, dtype=np.float64).copy()
    X = np.asarray(X)
    Yz = np.asarray(Yz, dtype=np.float64)
    _, grads = nir_loss(sw, e, X, Yz, lam, n_instances)
    rng = np.random.default_rng(seed)
    names = list(blocks) if blocks is not None else list(sw.params) + ["e"]
    out = {}
    for name in names:
        arr = e if name == "e" else sw.params[name]
        g = grads[name]
        flat = arr.reshape(-1)
        picks = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        num = np.empty(len(picks))
        for j, k in enumerate(picks):
            old = flat[k]
            flat[k] = old + h
            lp = nir_loss(sw, e, X, Yz, lam, n_instances, need_grad=False)[0].total
            flat[k] = old - h
            lm = nir_loss(sw, e, X, Yz, lam, n_instances, need_grad=False)[0].total
            flat[k] = old
            num[j] = (lp - lm) / (2 * h)
        ana = g.reshape(-1)[picks]
        # block-level relative error; coordinatewise ratios are dominated by
        # finite-difference noise wherever a single gradient entry is ~1e-9
        worst = float(np.linalg.norm(num - ana) / max(np.linalg.norm(num), np.linalg.norm(ana), 1e-300))
        out[name] = worst
    return out
