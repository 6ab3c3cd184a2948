"""``papforge`` command line.

Every command is a thin wrapper over library calls.  Failures exit nonzero
after printing one JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from papforge import coevolve as co
from papforge import workbench as wb
from papforge.insgen import PGPEState, mutate_nir
from papforge.moea import CLASSICS, classic_config
from papforge.portfolio import Portfolio
from papforge.problems import PROBLEM_CLASSES, generate_instance, instance_id, load_instance, save_instance
from papforge.seeding import derive_seed


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message, self.prog)
        sys.exit(2)


def _emit_error(kind: str, message: str, command: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "command": command}) + "\n")


def _config(args, **extra) -> dict:
    cfg = co.profile(args.profile, seed=args.seed)
    return {"command": args.command, "profile": args.profile, "seed": args.seed, "profile_config": cfg.to_dict(),
            **extra}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _portfolio(args, K: int) -> Portfolio:
    if getattr(args, "portfolio", None):
        return Portfolio.from_dict(json.loads(Path(args.portfolio).read_text()))
    return Portfolio(classic_config(CLASSICS[k]) for k in range(min(K, len(CLASSICS))))


INDEX_FORMAT = "papforge-instance-index"


def _load_instances(paths) -> list:
    """Instance files, directories of them, or index files; each instance is loaded once."""
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(f for f in p.glob("*.json") if f.name != "index.json")
            continue
        d = json.loads(p.read_text())
        if d.get("format") == INDEX_FORMAT:
            files += [p.parent / f"{i}.json" for i in d["instances"]]
        else:
            files.append(p)
    seen, out = set(), []
    for f in files:
        if f.resolve() not in seen:
            seen.add(f.resolve())
            out.append(load_instance(f))
    return out


# ---------------------------------------------------------------- commands

def cmd_gen_instances(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    out = Path(args.out)
    cfg = _config(args, problem_class=args.problem_class, dims=args.dims, count=args.count, split=args.split)
    ids = []
    for d in args.dims:
        for j in range(args.count):
            inst = generate_instance(args.problem_class, d, args.split, derive_seed(args.seed, "gen", d, j))
            save_instance(inst, out / f"{instance_id(inst)}.json")
            ids.append(instance_id(inst))
    _write_json(out / "index.json", {"format": INDEX_FORMAT, "config_digest": wb.digest(cfg), "config": cfg, "instances": ids})
    print(json.dumps({"written": len(ids), "out": str(out)}))
    return 0


def cmd_train_nir(args) -> int:
    cfg = co.profile(args.profile, seed=args.seed)
    if args.epochs is not None:
        cfg = replace(cfg, nir_epochs=args.epochs)
    if args.samples is not None:
        cfg = replace(cfg, nir_samples=args.samples)
    instances = _load_instances(args.instances)
    if not instances:
        raise UsageError("no instances given")
    if len({i.n_obj for i in instances}) != 1:
        raise UsageError("instances must share one objective count")
    ids = [instance_id(i) for i in instances]
    if len(set(ids)) != len(ids):
        raise UsageError("instances must be distinct")
    cfg = replace(cfg, seq2seq=args.seq2seq)
    sw, nirs, report = co.train_instance_nirs(instances, cfg,
                                              (lambda s: print(s, file=sys.stderr)) if args.verbose else None)
    conf = _config(args, instances=ids, nir_epochs=cfg.nir_epochs, nir_samples=cfg.nir_samples, seq2seq=args.seq2seq)
    wb.save_nir_set(args.out, sw, nirs, {i: inst for i, inst in zip(ids, instances)},
                    {"config_digest": wb.digest(conf)})
    _write_json(Path(args.out) / "train_report.json",
                {"config_digest": wb.digest(conf), "config": conf, "initial_mse": report.initial_mse,
                 "final_mse": report.final_mse, "history": report.history})
    print(json.dumps({"nirs": ids, "initial_mse": report.initial_mse, "final_mse": report.final_mse}))
    return 0


def cmd_mutate(args) -> int:
    cfg = co.profile(args.profile, seed=args.seed)
    nirs, _ = wb.load_nir_set(args.nirs)
    nid = args.nir_id or next(iter(nirs))
    if nid not in nirs:
        raise UsageError(f"unknown NIR id {nid!r}")
    P = _portfolio(args, cfg.K)
    state = PGPEState(N=cfg.pgpe_N, max_iter=args.max_iter or cfg.mutation_max_iter)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    conf = _config(args, nir=nid, portfolio=P.to_dict(), max_iter=state.max_iter)
    (out / "trace.jsonl").unlink(missing_ok=True)
    wb.write_header(out / "trace.jsonl", wb.digest(conf))
    res = mutate_nir(nirs[nid], P, state, seed=args.seed, max_eval=cfg.mutation_budget,
                     trace_path=out / "trace.jsonl")
    child = res.nir
    wb.save_nir_set(out, child.shared, {child.instance_id: child}, {child.instance_id: nirs[nid].repairer},
                    {"config_digest": wb.digest(conf)})
    _write_json(out / "mutation.json", {"config_digest": wb.digest(conf), "config": conf, "parent": nid,
                                        "child": child.instance_id, "performance": res.performance,
                                        "parent_performance": res.parent_performance})
    print(json.dumps({"child": child.instance_id, "performance": res.performance,
                      "parent_performance": res.parent_performance}))
    return 0


def cmd_run_pap(args) -> int:
    cfg = co.profile(args.profile, seed=args.seed)
    budget = args.budget or cfg.moea_budget
    P = _portfolio(args, cfg.K)
    evaluables = _load_instances(args.instances)
    if args.nirs:
        evaluables += list(wb.load_nir_set(args.nirs)[0].values())
    if not evaluables:
        raise UsageError("give --instances and/or --nirs")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for f in ("records.jsonl", "timings.jsonl"):
        (out / f).unlink(missing_ok=True)
    conf = _config(args, portfolio=P.to_dict(), max_eval=budget)
    rec = wb.evaluate_pap(P, evaluables, budget, args.seed, cfg.reference_samples, cfg.front_samples,
                          out / "records.jsonl", out / "timings.jsonl", conf, cfg.workers)
    (out / "results.json").write_text(rec.dumps() + "\n")
    print(wb.render_table(rec.aggregates()), end="")
    return 0


def cmd_coevolve(args) -> int:
    overrides = {"seed": args.seed, "provider": args.provider, "seq2seq": args.seq2seq}
    if args.model:
        overrides["llm_model"] = args.model
    if args.base_url:
        overrides["llm_base_url"] = args.base_url
    cfg = co.profile(args.profile, **overrides)
    instances = None
    if not args.resume:
        if args.instances:
            instances = _load_instances(args.instances)
        else:
            dims = args.dims or co.PROFILE_DIMS[args.profile]
            instances = co.training_instances(args.problem_class, dims, 1, args.seed)
    log = (lambda r: print(json.dumps(r, sort_keys=True), file=sys.stderr)) if args.verbose else None
    state = co.Coevolution(cfg, args.out, log).run(instances, args.resume)
    print(json.dumps({"portfolio": [c.label for c in state.portfolio], "instances": len(state.nir_ids),
                      "config_digest": cfg.digest()}))
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, sources = [], []
    for p in args.results:
        rec = wb.ExperimentRecord.from_dict(json.loads(Path(p).read_text()))
        rows += rec.rows
        sources.append(rec.config_digest)
    for p in args.matrix:
        from papforge.portfolio import PerformanceMatrix
        d = json.loads(Path(p).read_text())
        m = PerformanceMatrix.from_dict(d)
        rows += wb.rows_from_matrix(m)
        sources.append(d.get("config_digest", ""))
    if not rows and not args.scatter:
        raise UsageError("nothing to report: give --results, --matrix or --scatter")
    conf = {"command": "report", "sources": sources, "samples": args.samples, "seed": args.seed}
    dg = wb.digest(conf)
    if rows:
        agg = wb.aggregate(rows)
        table = wb.render_table(agg)
        (out / "report.md").write_text(f"<!-- config {dg} -->\n" + table)
        _write_json(out / "table.json", {"config_digest": dg, "rows": rows,
                                         "aggregates": [{"class": c, "dim": d, "method": mth, **v}
                                                        for (c, d, mth), v in agg.items()]})
        print(table, end="")
    if args.scatter:
        (out / "scatter").mkdir(exist_ok=True)
        for inst in _load_instances(args.scatter):
            F = wb.scatter_samples(inst, args.samples, derive_seed(args.seed, "scatter", instance_id(inst)))
            wb.write_scatter(out / "scatter" / f"{instance_id(inst)}.txt", F,
                             f"config {dg} instance {instance_id(inst)} samples {len(F)}")
    return 0


COMMANDS = {"gen-instances": cmd_gen_instances, "train-nir": cmd_train_nir, "mutate": cmd_mutate,
            "run-pap": cmd_run_pap, "coevolve": cmd_coevolve, "report": cmd_report}
LOCKED = {"train-nir", "mutate", "run-pap", "coevolve", "report", "gen-instances"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed; all sub-seeds derive from it")
    common.add_argument("--profile", choices=("smoke", "desk", "paper"), default="desk")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="papforge", description="Portfolio and instance co-evolution workbench.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-instances", parents=[common], help="generate benchmark instances")
    g.add_argument("--class", dest="problem_class", choices=PROBLEM_CLASSES, required=True)
    g.add_argument("--dims", "--dim", type=int, nargs="+", required=True)
    g.add_argument("--count", type=int, default=1, help="instances per dimension")
    g.add_argument("--split", choices=("train", "test"), default="train")

    t = sub.add_parser("train-nir", parents=[common], help="train NIRs for a set of instances")
    t.add_argument("--instances", nargs="+", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--samples", type=int)
    t.add_argument("--seq2seq", default="bundled", help="'bundled', 'none' or a checkpoint path")

    m = sub.add_parser("mutate", parents=[common], help="generate a harder NIR from an existing one")
    m.add_argument("--nirs", required=True, help="directory written by train-nir")
    m.add_argument("--nir-id")
    m.add_argument("--portfolio", help="portfolio JSON (defaults to the classic algorithms)")
    m.add_argument("--max-iter", type=int)

    r = sub.add_parser("run-pap", parents=[common], help="evaluate a portfolio on instances or NIRs")
    r.add_argument("--instances", nargs="*", default=[])
    r.add_argument("--nirs", help="directory written by train-nir or mutate")
    r.add_argument("--portfolio")
    r.add_argument("--budget", type=int, help="evaluations per member run")

    c = sub.add_parser("coevolve", parents=[common], help="run portfolio/instance co-evolution")
    c.add_argument("--class", dest="problem_class", choices=PROBLEM_CLASSES, default="MKP")
    c.add_argument("--dims", "--dim", type=int, nargs="+")
    c.add_argument("--instances", nargs="*")
    c.add_argument("--provider", choices=("catalog", "llm"), default="catalog")
    c.add_argument("--model", help="model name for the llm provider")
    c.add_argument("--base-url", help="chat-completion endpoint base URL")
    c.add_argument("--resume", help="checkpoint directory to continue from")
    c.add_argument("--seq2seq", default="bundled")

    rp = sub.add_parser("report", parents=[common], help="tables and scatter exports")
    rp.add_argument("--results", nargs="*", default=[], help="results.json files from run-pap")
    rp.add_argument("--matrix", nargs="*", default=[], help="matrix.json files from coevolve")
    rp.add_argument("--scatter", nargs="*", default=[], help="instance files to sample for scatter data")
    rp.add_argument("--samples", type=int, default=100_000)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in LOCKED:
            with wb.OutputLock(args.out):
                return COMMANDS[args.command](args)
        return COMMANDS[args.command](args)
    except Exception as exc:  # every failure becomes one machine-readable line
        _emit_error(type(exc).__name__, str(exc), args.command)
        return 1


if __name__ == "__main__":
    sys.exit(main())
