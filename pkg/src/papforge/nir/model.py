"""Neural instance representation: Seq2Seq encoder/decoder, hypernetwork, scorer.

All parameters live in flat ``name -> ndarray`` dicts so the optimizer,
checkpointing and gradient checking can treat them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from papforge.nir import layers

TOK_ZERO, TOK_ONE, SOS, EOS, PAD = 0, 1, 2, 3, 4
N_TOKENS = 5
TOKEN_DIM = 64
GRU_WIDTHS = (128, 128)
CONTEXT_DIM = sum(GRU_WIDTHS)
EMBED_DIM = 32
HYPER_HIDDEN = 64
SCORER_WIDTHS = (128, 128)
MAX_LEN = 128
ENC_LAYERS = ("enc0", "enc1")
DEC_LAYERS = ("dec0", "dec1")
GRU_KEYS = ("Wx", "Wh", "bx", "bh")


def scorer_shapes(n_obj: int) -> list[tuple[str, tuple[int, ...]]]:
    h1, h2 = SCORER_WIDTHS
    return [("W1", (CONTEXT_DIM, h1)), ("b1", (h1,)),
            ("W2", (h1, h2)), ("b2", (h2,)),
            ("W3", (h2, n_obj)), ("b3", (n_obj,))]


def scorer_size(n_obj: int) -> int:
    """Flat hypernetwork output length; 49408 + 129 * n_obj."""
    return sum(int(np.prod(s)) for _, s in scorer_shapes(n_obj))


def unflatten_scorer(flat: np.ndarray, n_obj: int) -> dict:
    out, i = {}, 0
    for name, shape in scorer_shapes(n_obj):
        k = int(np.prod(shape))
        out[name] = flat[..., i:i + k].reshape(flat.shape[:-1] + shape)
        i += k
    return out


def flatten_scorer(blocks: dict, n_obj: int) -> np.ndarray:
    return np.concatenate([blocks[name].reshape(-1) for name, _ in scorer_shapes(n_obj)])


@dataclass
class SharedWeights:
    """Class-level weights shared by every NIR of one problem class."""

    n_obj: int
    params: dict = field(default_factory=dict)
    reverse_input: bool = True
    # context vectors keyed by bit pattern; valid only while params are unchanged
    _enc_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.params:
            got = self.params["hyper.W2"].shape[1]
            assert got == scorer_size(self.n_obj), (got, scorer_size(self.n_obj))

    @classmethod
    def initialize(cls, n_obj: int, seed: int = 0, dtype=np.float32, reverse_input: bool = True):
        rng = np.random.default_rng(seed)
        p: dict[str, np.ndarray] = {}
        p["tok_emb"] = rng.normal(0.0, 1.0, size=(N_TOKENS, TOKEN_DIM)).astype(dtype)
        for prefix in ("enc", "dec"):
            n_in = TOKEN_DIM
            for i, width in enumerate(GRU_WIDTHS):
                for k, v in layers.gru_init(rng, n_in, width, dtype).items():
                    p[f"{prefix}{i}.{k}"] = v
                n_in = width
        bound = 1.0 / np.sqrt(GRU_WIDTHS[-1])
        p["out.W"] = rng.uniform(-bound, bound, size=(GRU_WIDTHS[-1], N_TOKENS)).astype(dtype)
        p["out.b"] = np.zeros(N_TOKENS, dtype=dtype)
        p.update(init_hypernet(rng, n_obj, dtype))
        return cls(n_obj=n_obj, params=p, reverse_input=reverse_input)

    def copy(self) -> "SharedWeights":
        return SharedWeights(self.n_obj, {k: v.copy() for k, v in self.params.items()},
                             self.reverse_input)

    def astype(self, dtype) -> "SharedWeights":
        return SharedWeights(self.n_obj, {k: v.astype(dtype) for k, v in self.params.items()},
                             self.reverse_input)

    @property
    def dtype(self):
        return self.params["tok_emb"].dtype

    def gru(self, name: str) -> dict:
        return {k: self.params[f"{name}.{k}"] for k in GRU_KEYS}

    def invalidate_cache(self) -> None:
        self._enc_cache.clear()

    def encode_cached(self, X: np.ndarray, max_entries: int = 200_000) -> np.ndarray:
        """Encode rows of X, reusing earlier results for repeated bit patterns."""
        X = np.ascontiguousarray(X, dtype=np.uint8)
        keys = [r.tobytes() for r in X]
        cache = self._enc_cache
        miss = [i for i, k in enumerate(keys) if k not in cache]
        if miss:
            uniq = {}
            for i in miss:
                uniq.setdefault(keys[i], i)
            rows = list(uniq.values())
            C = encode_chunked(self, X[rows])
            if len(cache) + len(rows) > max_entries:
                cache.clear()
            for i, c in zip(rows, C):
                cache[keys[i]] = c
        return np.stack([cache[k] for k in keys]) if keys else np.zeros((0, CONTEXT_DIM), self.dtype)

    def fingerprint(self) -> dict:
        return {"n_obj": self.n_obj, "token_dim": TOKEN_DIM, "gru_widths": list(GRU_WIDTHS),
                "embed_dim": EMBED_DIM, "hyper_hidden": HYPER_HIDDEN,
                "scorer_widths": list(SCORER_WIDTHS), "scorer_size": scorer_size(self.n_obj),
                "reverse_input": self.reverse_input}


ENCODE_CHUNK = 32


def encode_chunked(sw: "SharedWeights", X: np.ndarray) -> np.ndarray:
    """Encode in zero-padded blocks of fixed size.

    BLAS results depend on matrix shapes, so a fixed block size makes every
    row's encoding independent of what it was batched with; cached and
    recomputed encodings then agree bit for bit.
    """
    n = len(X)
    pad = (-n) % ENCODE_CHUNK
    if pad:
        X = np.concatenate([X, np.zeros((pad, X.shape[1]), dtype=X.dtype)])
    out = [encode(sw, X[i:i + ENCODE_CHUNK]) for i in range(0, len(X), ENCODE_CHUNK)]
    return np.concatenate(out)[:n]


def init_hypernet(rng: np.random.Generator, n_obj: int, dtype=np.float32) -> dict:
    # The output bias holds a conventional scorer initialization; the weight
    # matrix starts small so embeddings modulate around it.
    p = {}
    p["hyper.W1"] = rng.normal(0.0, 1.0 / np.sqrt(EMBED_DIM), size=(EMBED_DIM, HYPER_HIDDEN)).astype(dtype)
    p["hyper.b1"] = np.zeros(HYPER_HIDDEN, dtype=dtype)
    base, w_std = {}, []
    for name, shape in scorer_shapes(n_obj):
        fan_in = shape[0] if len(shape) == 2 else 1
        scale = 1.0 / np.sqrt(shape[0]) if len(shape) == 2 else 0.0
        base[name] = (rng.uniform(-1, 1, size=shape) * scale).astype(dtype) if scale else np.zeros(shape, dtype)
        std = 0.5 / np.sqrt(fan_in * HYPER_HIDDEN) if len(shape) == 2 else 0.05 / np.sqrt(HYPER_HIDDEN)
        w_std.append(np.full(int(np.prod(shape)), std))
    p["hyper.b2"] = flatten_scorer(base, n_obj).astype(dtype)
    p["hyper.W2"] = (rng.normal(size=(HYPER_HIDDEN, scorer_size(n_obj))) * np.concatenate(w_std)).astype(dtype)
    return p


def init_embedding(rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    return rng.normal(0.0, 1.0, size=EMBED_DIM).astype(dtype)


# ---------------------------------------------------------------- encoder

def to_tokens(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    return X.astype(np.int64)


def encode_forward(sw: SharedWeights, tokens: np.ndarray):
    """Context vectors (B, 256): both encoder layers' final states, concatenated."""
    tokens = to_tokens(tokens)
    seq = tokens[:, ::-1] if sw.reverse_input else tokens
    emb = sw.params["tok_emb"][seq]
    B = emb.shape[0]
    x, caches, finals = emb, [], []
    for name, width in zip(ENC_LAYERS, GRU_WIDTHS):
        h0 = np.zeros((B, width), dtype=sw.dtype)
        Hs, cache = layers.gru_forward(x, h0, sw.gru(name))
        caches.append(cache)
        finals.append(Hs[:, -1])
        x = Hs
    c = np.concatenate(finals, axis=1)
    return c, (seq, caches)


def encode_backward(sw: SharedWeights, dc: np.ndarray, cache) -> dict:
    seq, caches = cache
    grads = {}
    B, L = seq.shape
    dx_above = None
    offsets = np.cumsum((0,) + GRU_WIDTHS)
    for li in range(len(ENC_LAYERS) - 1, -1, -1):
        name = ENC_LAYERS[li]
        width = GRU_WIDTHS[li]
        dHs = np.zeros((B, L, width), dtype=dc.dtype) if dx_above is None else dx_above
        dHs[:, -1] += dc[:, offsets[li]:offsets[li + 1]]
        dX, _, g = layers.gru_backward(dHs, caches[li], sw.gru(name))
        for k, v in g.items():
            grads[f"{name}.{k}"] = v
        dx_above = dX
    demb = np.zeros_like(sw.params["tok_emb"])
    np.add.at(demb, seq.reshape(-1), dx_above.reshape(B * L, -1))
    grads["tok_emb"] = demb
    return grads


def encode(sw: SharedWeights, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Batched inference-only encoding."""
    X = to_tokens(X)
    if X.shape[1] < 1 or X.shape[1] > MAX_LEN:
        raise ValueError(f"sequence length must be in [1, {MAX_LEN}], got {X.shape[1]}")
    outs = [encode_forward(sw, X[i:i + chunk])[0] for i in range(0, len(X), chunk)]
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, CONTEXT_DIM), sw.dtype)


# ---------------------------------------------------------------- decoder

def split_context(c: np.ndarray) -> list[np.ndarray]:
    offsets = np.cumsum((0,) + GRU_WIDTHS)
    return [c[:, offsets[i]:offsets[i + 1]] for i in range(len(GRU_WIDTHS))]


def decode_forward(sw: SharedWeights, c: np.ndarray, tokens: np.ndarray):
    """Teacher-forced decoding; returns logits (B, L+1, 5) over ``x_1..x_L, EOS``."""
    tokens = to_tokens(tokens)
    B, L = tokens.shape
    inp = np.concatenate([np.full((B, 1), SOS), tokens], axis=1)
    x = sw.params["tok_emb"][inp]
    caches = []
    for name, h0 in zip(DEC_LAYERS, split_context(c)):
        Hs, cache = layers.gru_forward(x, np.ascontiguousarray(h0), sw.gru(name))
        caches.append(cache)
        x = Hs
    logits = (x.reshape(B * (L + 1), -1) @ sw.params["out.W"] + sw.params["out.b"]).reshape(B, L + 1, N_TOKENS)
    return logits, (inp, caches, x)


def decode_backward(sw: SharedWeights, dlogits: np.ndarray, cache):
    inp, caches, top = cache
    B, T, _ = dlogits.shape
    d2 = dlogits.reshape(B * T, N_TOKENS)
    grads = {"out.W": top.reshape(B * T, -1).T @ d2, "out.b": d2.sum(axis=0)}
    dx = (d2 @ sw.params["out.W"].T).reshape(B, T, -1)
    dcs = []
    for li in range(len(DEC_LAYERS) - 1, -1, -1):
        name = DEC_LAYERS[li]
        dx, dh0, g = layers.gru_backward(dx, caches[li], sw.gru(name))
        for k, v in g.items():
            grads[f"{name}.{k}"] = v
        dcs.append(dh0)
    demb = np.zeros_like(sw.params["tok_emb"])
    np.add.at(demb, inp.reshape(-1), dx.reshape(B * T, -1))
    grads["tok_emb"] = demb
    return np.concatenate(dcs[::-1], axis=1), grads


def greedy_decode(sw: SharedWeights, c: np.ndarray, max_len: int = MAX_LEN,
                  length: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Greedy readout. Returns (tokens (B, T), probs (B, T, 5)).

    With ``length`` given, exactly that many tokens are read (EOS is not
    consulted); otherwise generation stops once every row emitted EOS or at
    ``max_len``. Output is never longer than MAX_LEN.
    """
    B = c.shape[0]
    hs = [np.ascontiguousarray(h) for h in split_context(c)]
    tok = np.full(B, SOS)
    out_t, out_p = [], []
    done = np.zeros(B, dtype=bool)
    steps = length if length is not None else max_len
    for _ in range(min(steps, max_len, MAX_LEN)):
        x = sw.params["tok_emb"][tok]
        for i, name in enumerate(DEC_LAYERS):
            hs[i] = layers.gru_step(x, hs[i], sw.gru(name))
            x = hs[i]
        probs = layers.softmax(x @ sw.params["out.W"] + sw.params["out.b"])
        if length is not None:
            tok = np.argmax(probs[:, :2], axis=1)
        else:
            tok = np.argmax(probs, axis=1)
        out_t.append(tok)
        out_p.append(probs)
        if length is None:
            done |= tok == EOS
            if done.all():
                break
    return np.stack(out_t, axis=1), np.stack(out_p, axis=1)


# ---------------------------------------------------------------- hypernetwork + scorer

def hyper_forward(sw: SharedWeights, e: np.ndarray):
    p = sw.params
    a = e @ p["hyper.W1"] + p["hyper.b1"]
    h = layers.leaky_relu(a)
    flat = h @ p["hyper.W2"] + p["hyper.b2"]
    return flat, (e, a, h)


def hyper_backward(sw: SharedWeights, dflat: np.ndarray, cache):
    e, a, h = cache
    p = sw.params
    grads = {"hyper.W2": np.outer(h, dflat), "hyper.b2": dflat.copy()}
    da = (p["hyper.W2"] @ dflat) * layers.leaky_relu_grad(a)
    grads["hyper.W1"] = np.outer(e, da)
    grads["hyper.b1"] = da
    de = p["hyper.W1"] @ da
    return de, grads


def scorer_weights(sw: SharedWeights, e: np.ndarray) -> dict:
    flat, _ = hyper_forward(sw, np.asarray(e, dtype=sw.dtype))
    return unflatten_scorer(flat, sw.n_obj)


def scorer_forward(w: dict, c: np.ndarray):
    a1 = c @ w["W1"] + w["b1"]
    h1 = layers.leaky_relu(a1)
    a2 = h1 @ w["W2"] + w["b2"]
    h2 = layers.leaky_relu(a2)
    y = h2 @ w["W3"] + w["b3"]
    return y, (c, a1, h1, a2, h2)


def scorer_backward(w: dict, dy: np.ndarray, cache):
    c, a1, h1, a2, h2 = cache
    g = {"W3": h2.T @ dy, "b3": dy.sum(axis=0)}
    da2 = (dy @ w["W3"].T) * layers.leaky_relu_grad(a2)
    g["W2"] = h1.T @ da2
    g["b2"] = da2.sum(axis=0)
    da1 = (da2 @ w["W2"].T) * layers.leaky_relu_grad(a1)
    g["W1"] = c.T @ da1
    g["b1"] = da1.sum(axis=0)
    dc = da1 @ w["W1"].T
    return dc, g
