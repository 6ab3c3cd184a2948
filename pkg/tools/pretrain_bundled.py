"""Regenerate the bundled pretrained encoder/decoder weights.

    python3 tools/pretrain_bundled.py [--steps N] [--seed S] [--out PATH] [--init PATH --lr LR]

``--init`` continues from an earlier checkpoint, typically with a smaller ``--lr``.
"""

import argparse
import sys

from papforge.nir import checkpoint, model, training


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=80_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eval-every", type=int, default=500)
    ap.add_argument("--out", default=str(checkpoint.bundled_seq2seq_path()))
    ap.add_argument("--init", help="seq2seq checkpoint to continue from")
    ap.add_argument("--lr", type=float, default=2e-3)
    args = ap.parse_args(argv)

    sw = model.SharedWeights.initialize(2, seed=args.seed)
    start = None
    if args.init:
        checkpoint.load_seq2seq_into(args.init, sw)
        start = 64  # the curriculum is already done

    def save(weights, step):
        checkpoint.save_seq2seq(args.out, weights, {"step": step, "seed": args.seed})

    rep = training.pretrain_seq2seq(sw, steps=args.steps, seed=args.seed, eval_every=args.eval_every, lr=args.lr,
                                    start_len=start,
                                    log=lambda m: print(m, flush=True), checkpoint=save)
    acc = training.reconstruction_accuracy(sw, range(8, 65), 32, seed=12345)
    save(sw, rep.steps)
    checkpoint.save_seq2seq(args.out, sw, {"steps": rep.steps, "seed": args.seed, "heldout_accuracy": acc,
                                           "seconds": round(rep.seconds)})
    print(f"done: steps {rep.steps}, held-out greedy accuracy {acc:.4f}, {rep.seconds:.0f}s")
    return 0 if acc >= 0.99 else 1


if __name__ == "__main__":
    sys.exit(main())
