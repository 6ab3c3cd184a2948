"""Neural instance representation: GRU seq2seq encoder/decoder, hypernetwork and scorer."""

from papforge.nir.checkpoint import (FingerprintMismatch, bundled_seq2seq_path, load_seq2seq_into, load_shared,
                                     pretrained_shared, save_seq2seq, save_shared)
from papforge.nir.model import (CONTEXT_DIM, EMBED_DIM, MAX_LEN, SharedWeights, encode, greedy_decode,
                                scorer_size, scorer_weights)
from papforge.nir.surrogate import NIR, shared_digest
from papforge.nir.training import (Dataset, TrainingDiverged, TrainingSample, gradient_check, nir_loss,
                                   pretrain_seq2seq, reconstruction_accuracy, sample_dataset, train_nirs)


def decode(shared, c, max_len: int = MAX_LEN):
    """Greedy readout of context vectors; returns (tokens, per-position probabilities)."""
    return greedy_decode(shared, c, max_len=max_len)


def nir_evaluate(m: NIR, x):
    return m.evaluate(x)


def build_nirs(shared, instances, datasets, embeddings, ids=None):
    """Wrap trained embeddings as NIR objects tied to their source instances."""
    ids = ids or [d.instance_id for d in datasets]
    return [NIR(shared, e, inst.dim, d.mean, d.std, inst, i) for inst, d, e, i in zip(instances, datasets,
                                                                                         embeddings, ids)]


__all__ = [
    "CONTEXT_DIM", "EMBED_DIM", "MAX_LEN", "NIR", "Dataset", "FingerprintMismatch", "SharedWeights",
    "TrainingDiverged", "TrainingSample", "build_nirs", "bundled_seq2seq_path", "decode", "encode",
    "gradient_check", "greedy_decode", "load_seq2seq_into", "load_shared", "nir_evaluate", "nir_loss",
    "pretrain_seq2seq", "pretrained_shared", "reconstruction_accuracy", "sample_dataset", "save_seq2seq",
    "save_shared", "scorer_size", "scorer_weights", "shared_digest", "train_nirs",
]
