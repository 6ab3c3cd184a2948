"""Weight checkpoints as ``.npz`` archives with a JSON architecture header."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from papforge.nir import model as M

FORMAT = "papforge-nir"
VERSION = 1
SEQ2SEQ_PREFIXES = ("tok_emb", "enc", "dec", "out.")


class FingerprintMismatch(ValueError):
    pass


def _header(kind: str, fingerprint: dict, extra: dict | None = None) -> np.ndarray:
    h = {"format": FORMAT, "version": VERSION, "kind": kind, "fingerprint": fingerprint}
    if extra:
        h.update(extra)
    return np.array(json.dumps(h, sort_keys=True))


def save_shared(path, sw: M.SharedWeights, embeddings: dict | None = None, meta: dict | None = None) -> None:
    """Shared weights plus optional per-instance embeddings and target scalers.

    ``embeddings`` maps instance id to a dict with keys ``e``, ``mean``, ``std``.
    """
    arrays = {f"w/{k}": v for k, v in sw.params.items()}
    ids = sorted(embeddings or {})
    for i in ids:
        for k, v in embeddings[i].items():
            arrays[f"nir/{i}/{k}"] = np.asarray(v)
    arrays["__header__"] = _header("shared", sw.fingerprint(), {"instances": ids, "meta": meta or {}})
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_shared(path, expect: dict | None = None):
    """Returns ``(SharedWeights, embeddings, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        head = json.loads(str(z["__header__"]))
        if head.get("format") != FORMAT or head.get("kind") != "shared":
            raise ValueError(f"{path}: not a shared-weight checkpoint")
        fp = head["fingerprint"]
        if expect is not None and any(fp.get(k) != v for k, v in expect.items()):
            raise FingerprintMismatch(f"{path}: architecture {fp} does not match {expect}")
        params = {k[2:]: z[k].copy() for k in z.files if k.startswith("w/")}
        emb = {}
        for i in head["instances"]:
            pre = f"nir/{i}/"
            emb[i] = {k[len(pre):]: z[k].copy() for k in z.files if k.startswith(pre)}
    sw = M.SharedWeights(fp["n_obj"], params, fp["reverse_input"])
    if sw.fingerprint() != fp:
        raise FingerprintMismatch(f"{path}: stored fingerprint disagrees with the loaded tensors")
    return sw, emb, head.get("meta", {})


def save_seq2seq(path, sw: M.SharedWeights, meta: dict | None = None) -> None:
    arrays = {f"w/{k}": v for k, v in sw.params.items() if k.startswith(SEQ2SEQ_PREFIXES)}
    fp = {k: v for k, v in sw.fingerprint().items() if k in ("token_dim", "gru_widths", "reverse_input")}
    arrays["__header__"] = _header("seq2seq", fp, {"meta": meta or {}})
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_seq2seq_into(path, sw: M.SharedWeights) -> dict:
    """Copy pretrained encoder/decoder tensors into ``sw``; returns the stored metadata."""
    with np.load(path, allow_pickle=False) as z:
        head = json.loads(str(z["__header__"]))
        if head.get("kind") != "seq2seq":
            raise ValueError(f"{path}: not a seq2seq checkpoint")
        fp = head["fingerprint"]
        if fp["gru_widths"] != list(M.GRU_WIDTHS) or fp["token_dim"] != M.TOKEN_DIM:
            raise FingerprintMismatch(f"{path}: architecture {fp} does not match this build")
        for k in z.files:
            if k.startswith("w/"):
                sw.params[k[2:]] = z[k].astype(sw.dtype)
    sw.reverse_input = fp["reverse_input"]
    sw.invalidate_cache()
    return head.get("meta", {})


def bundled_seq2seq_path() -> Path:
    return Path(str(resources.files("papforge.nir") / "data" / "seq2seq_pretrained.npz"))


def pretrained_shared(n_obj: int, seed: int = 0, path=None) -> M.SharedWeights:
    """Fresh shared weights for ``n_obj`` objectives with the pretrained encoder/decoder loaded."""
    sw = M.SharedWeights.initialize(n_obj, seed=seed)
    load_seq2seq_into(path or bundled_seq2seq_path(), sw)
    return sw
