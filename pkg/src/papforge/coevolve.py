"""Co-evolution driver: alternate portfolio evolution and adversarial instance evolution.

Each round grows a candidate pool from proposals, tunes each proposal for its
contribution to the current portfolio, and keeps the best K-subset.  Between
rounds, NIRs on which the portfolio does poorly are mutated into harder ones.
State is checkpointed after every mining iteration and every mutation.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from papforge.insgen import PGPEState, mutate_nir
from papforge.metrics import DegenerateReference
from papforge.moea import CLASSICS, Configuration, classic_config
from papforge.nir import NIR, SharedWeights, sample_dataset, train_nirs
from papforge.nir.checkpoint import bundled_seq2seq_path, load_seq2seq_into, load_shared, save_shared
from papforge.opgen import LLMProvider, build_summary, catalog_proposal, validate_proposal
from papforge.opgen.llm import ProposalRejected
from papforge.opgen.proposal import SchemaError
from papforge.portfolio import (InstanceReference, PerformanceMatrix, Portfolio, aas_bounds, evaluate_configs,
                                select_subset, subset_objective)
from papforge.problems import generate_instance, instance_from_dict, instance_id, instance_to_dict
from papforge.seeding import derive_seed, rng_for
from papforge.tuner import random_assignment, tune_contribution

PROPOSAL_ATTEMPTS = 3


@dataclass(frozen=True)
class CoevolutionConfig:
    K: int = 4
    max_round: int = 4
    n_mining: int = 20
    tuner_trials: int = 1600
    mutation_max_iter: int = 200
    pgpe_N: int = 8
    moea_budget: int = 10_000
    mutation_budget: int = 2000
    nir_samples: int = 10_000
    nir_epochs: int = 5000
    nir_batch: int = 1024
    nir_lr: tuple = (0.002, 0.0005)
    nir_lambda: float = 1.0
    reference_samples: int = 100_000
    front_samples: int = 5000
    provider: str = "catalog"
    llm_base_url: str = "https://openrouter.ai/api/v1"
    llm_model: str | None = None
    llm_temperature: float = 1.0
    seq2seq: str = "bundled"
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if self.K < 1 or self.max_round < 1 or self.n_mining < 0:
            raise ValueError("need K >= 1, max_round >= 1 and n_mining >= 0")
        if self.tuner_trials < 1 or self.mutation_max_iter < 1 or self.pgpe_N < 1:
            raise ValueError("tuner_trials, mutation_max_iter and pgpe_N must be positive")
        if self.provider not in ("catalog", "llm"):
            raise ValueError("provider must be 'catalog' or 'llm'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nir_lr"] = list(self.nir_lr)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CoevolutionConfig":
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in names}
        if "nir_lr" in kw:
            kw["nir_lr"] = tuple(kw["nir_lr"])
        return cls(**kw)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


def profile(name: str, **overrides) -> CoevolutionConfig:
    """Named settings: ``paper`` (full protocol), ``desk`` (budgets cut by ten) or ``smoke`` (seconds)."""
    if name == "paper":
        cfg = CoevolutionConfig()
    elif name == "desk":
        cfg = CoevolutionConfig(K=2, max_round=2, n_mining=4, tuner_trials=160, mutation_max_iter=20,
                                moea_budget=1000, mutation_budget=200, nir_samples=1000, nir_epochs=500,
                                nir_batch=256, reference_samples=10_000, front_samples=500)
    elif name == "smoke":
        cfg = CoevolutionConfig(K=2, max_round=2, n_mining=3, tuner_trials=6, mutation_max_iter=3, pgpe_N=2,
                                moea_budget=200, mutation_budget=150, nir_samples=200, nir_epochs=10,
                                nir_batch=100, reference_samples=200, front_samples=64)
    else:
        raise ValueError(f"unknown profile {name!r}; expected paper, desk or smoke")
    return replace(cfg, **overrides)


PROFILE_DIMS = {"paper": (32, 40, 48, 56, 64), "desk": (12, 14, 16), "smoke": (8, 10, 12)}


def training_instances(problem_class: str, dims, per_dim: int = 1, seed: int = 0) -> list:
    return [generate_instance(problem_class, d, "train", derive_seed(seed, "train-instance", d, j))
            for d in dims for j in range(per_dim)]


@dataclass
class RoundState:
    round: int
    phase: str
    portfolio: Portfolio
    nir_ids: list[str]
    nirs: dict
    sources: dict
    shared: SharedWeights
    matrix: PerformanceMatrix
    candidates: list = field(default_factory=list)
    mining_iter: int = 0
    evo: dict = field(default_factory=dict)
    audit: list = field(default_factory=list)

    def evaluables(self, ids=None) -> dict:
        return {i: self.nirs[i] for i in (self.nir_ids if ids is None else ids)}

    def objective(self, P=None) -> float:
        P = self.portfolio if P is None else P
        return float(self.matrix.table(list(P), self.nir_ids).max(axis=0).sum())


class Coevolution:
    """One co-evolution run; ``out_dir`` enables logs and checkpoints."""

    def __init__(self, config: CoevolutionConfig, out_dir: str | Path | None = None, log=None):
        config.validate()
        self.cfg = config
        self.out = Path(out_dir) if out_dir else None
        self.log = log
        self.run_seed = derive_seed(config.seed, "member-runs")
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / "traces").mkdir(exist_ok=True)
        self._provider = None

    # -- logging
    def _audit(self, state: RoundState, rec: dict) -> None:
        rec = {"round": state.round, **rec}
        state.audit.append(rec)
        if self.out:
            with open(self.out / "audit.jsonl", "a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        if self.log:
            self.log(rec)

    def _path(self, *parts):
        return str(self.out.joinpath(*parts)) if self.out else None

    # -- NIR references
    def _register(self, state: RoundState, nid: str) -> None:
        ev = state.nirs[nid]
        for attempt in range(2):
            ref = InstanceReference.build(ev, self.cfg.reference_samples, self.cfg.front_samples,
                                          derive_seed(self.cfg.seed, "reference", nid, attempt))
            try:
                ref.hv_ref()
            except DegenerateReference:
                continue
            state.matrix.add_instance(nid, ref)
            return
        raise DegenerateReference(f"{nid}: reference front stays degenerate after resampling")

    def _fill(self, state: RoundState, configs, ids=None) -> None:
        for nid in (state.nir_ids if ids is None else ids):
            evaluate_configs(list(configs), state.nirs[nid], nid, state.matrix, self.cfg.moea_budget, self.run_seed,
                             self.cfg.workers)

    # -- initialization
    def initialize(self, instances) -> RoundState:
        cfg = self.cfg
        if not instances:
            raise ValueError("need at least one training instance")
        classes = {i.problem_class for i in instances}
        if len(classes) != 1:
            raise ValueError(f"training instances must share one problem class, got {sorted(classes)}")
        ids = [instance_id(i) for i in instances]
        if len(set(ids)) != len(ids):
            raise ValueError("training instances must be distinct")
        sw, nirs, report = train_instance_nirs(instances, cfg)
        members = []
        for k in range(cfg.K):
            c = classic_config(CLASSICS[k % len(CLASSICS)])
            copy = k // len(CLASSICS)
            if copy:
                # repeated classics start from a seeded random point so members stay distinct
                rng = rng_for(cfg.seed, "classic-copy", k)
                c = c.with_assignment(random_assignment(c.descriptor.hyperparameters, rng), f"{c.label}-{copy + 1}")
            members.append(c)
        state = RoundState(1, "init", Portfolio(members), list(ids), nirs, {i: inst for i, inst in zip(ids, instances)},
                           sw, PerformanceMatrix(self._path("matrix_records.jsonl")))
        self._audit(state, {"event": "config", "config_digest": cfg.digest()})
        self._audit(state, {"event": "nir-training", "initial_mse": report.initial_mse,
                            "final_mse": report.final_mse})
        for nid in ids:
            self._register(state, nid)
        for k in range(cfg.K):
            members = list(state.portfolio)
            tuned, res = tune_contribution(members[k], members[:k] + members[k + 1:], state.evaluables(),
                                           state.matrix, cfg.tuner_trials, cfg.moea_budget, self.run_seed,
                                           derive_seed(cfg.seed, "tune-init", k),
                                           self._path(f"tuning-init-{k}.jsonl"), cfg.workers)
            if tuned.key() not in {m.key() for i, m in enumerate(members) if i != k}:
                members[k] = tuned
            state.portfolio = Portfolio(members)
            self._audit(state, {"event": "init-tuning", "member": k, "label": tuned.label,
                                "objective": res.best_value})
        state.phase = "pap"
        self.checkpoint(state)
        return state

    # -- portfolio evolution
    def _proposal(self, state: RoundState, i: int):
        cfg = self.cfg
        for attempt in range(PROPOSAL_ATTEMPTS):
            if cfg.provider == "catalog":
                prop = catalog_proposal(state.round, i * PROPOSAL_ATTEMPTS + attempt, cfg.seed)
            else:
                self._fill(state, state.portfolio)
                summary = build_summary(state.portfolio, [(n, state.nirs[n].dim) for n in state.nir_ids],
                                        state.matrix)
                dims = [state.nirs[n].dim for n in state.nir_ids]
                if self._provider is None:
                    self._provider = LLMProvider(cfg.llm_base_url, cfg.llm_model, cfg.llm_temperature)
                try:
                    prop = self._provider.propose(summary, (min(dims), max(dims)), (state.shared.n_obj,),
                                                  log=lambda r: self._audit(state, {**r, "iteration": i}))
                except (ProposalRejected, SchemaError) as exc:
                    self._audit(state, {"event": "proposal-rejected", "iteration": i, "stage": "schema",
                                        "reason": str(exc)})
                    continue
            v = validate_proposal(prop, seed=derive_seed(cfg.seed, "dry-run", state.round, i))
            if v.ok:
                return prop
            self._audit(state, {"event": "proposal-rejected", "iteration": i, "stage": v.stage, "reason": v.reason})
        return None

    def evolve_pap(self, state: RoundState) -> RoundState:
        cfg = self.cfg
        if not state.candidates:
            state.candidates = list(state.portfolio)
            state.mining_iter = 0
        self._fill(state, state.portfolio)
        for i in range(state.mining_iter, cfg.n_mining):
            prop = self._proposal(state, i)
            if prop is None:
                self._audit(state, {"event": "mining-skipped", "iteration": i,
                                    "reason": "every proposal was rejected"})
            else:
                cand = prop.configuration(f"r{state.round}-c{i}")
                tuned, res = tune_contribution(cand, state.portfolio, state.evaluables(), state.matrix,
                                               cfg.tuner_trials, cfg.moea_budget, self.run_seed,
                                               derive_seed(cfg.seed, "tune", state.round, i),
                                               self._path(f"tuning-r{state.round}-c{i}.jsonl"), cfg.workers)
                if tuned.key() in {c.key() for c in state.candidates}:
                    self._audit(state, {"event": "candidate-duplicate", "iteration": i, "label": tuned.label})
                else:
                    state.candidates.append(tuned)
                    self._audit(state, {"event": "candidate", "iteration": i, "label": tuned.label,
                                        "description": prop.description, "objective": res.best_value})
            state.mining_iter = i + 1
            self.checkpoint(state)
        self._fill(state, state.candidates)
        V = state.matrix.table(state.candidates, state.nir_ids)
        rows = select_subset(V, cfg.K)
        # compared on the final matrix: reference widening during mining rescales whole columns
        base_objective = state.objective()
        state.portfolio = Portfolio(state.candidates[r] for r in rows)
        new_objective = subset_objective(V, rows)
        bounds = aas_bounds(state.matrix.table(list(state.portfolio), state.nir_ids))
        self._audit(state, {"event": "select", "candidates": len(state.candidates),
                            "members": [c.label for c in state.portfolio], "objective_before": base_objective,
                            "objective_after": new_objective,
                            "aas": {k: [float(x) for x in bounds[k]] for k in ("oracle", "random", "worst")},
                            "instances": list(state.nir_ids)})
        state.candidates, state.mining_iter = [], 0
        state.phase = "instances" if state.round < cfg.max_round else "done"
        self.checkpoint(state)
        return state

    # -- instance evolution
    def _fitness(self, state: RoundState, nid: str) -> float:
        self._fill(state, state.portfolio, [nid])
        return -max(state.matrix.value(c, nid) for c in state.portfolio)

    def evolve_instances(self, state: RoundState) -> RoundState:
        cfg = self.cfg
        if not state.evo:
            fit = {nid: self._fitness(state, nid) for nid in state.nir_ids}
            state.evo = {"copy": list(state.nir_ids), "live": list(state.nir_ids), "new": [], "fitness": fit,
                         "step": 0, "stopped": False}
        evo = state.evo
        n_steps = len(evo["copy"]) // 2
        while evo["step"] < n_steps and not evo["stopped"]:
            step = evo["step"]
            rng = rng_for(cfg.seed, "instance-evolution", state.round, step)
            parent = evo["copy"][int(rng.integers(len(evo["copy"])))]
            new_id = f"r{state.round}-m{step}"
            res = mutate_nir(state.nirs[parent], state.portfolio,
                             PGPEState(N=cfg.pgpe_N, max_iter=cfg.mutation_max_iter),
                             seed=derive_seed(cfg.seed, "mutation", state.round, step),
                             max_eval=cfg.mutation_budget, instance_id=new_id,
                             trace_path=self._path("traces", f"{new_id}.jsonl"))
            state.nirs[new_id] = res.nir
            state.sources[new_id] = state.sources[parent]
            try:
                self._register(state, new_id)
                f_new = self._fitness(state, new_id)
            except DegenerateReference:
                f_new = None
            weaker = sorted(n for n in evo["live"] if f_new is not None and evo["fitness"][n] < f_new)
            rec = {"event": "mutation", "step": step, "parent": parent, "child": new_id, "fitness": f_new,
                   "search_performance": res.performance, "parent_search_performance": res.parent_performance}
            if not weaker:
                state.matrix.drop_instance(new_id)
                del state.nirs[new_id], state.sources[new_id]
                evo["stopped"] = True
                self._audit(state, {**rec, "outcome": "stop"})
            else:
                victim = weaker[int(rng.integers(len(weaker)))]
                evo["live"].remove(victim)
                evo["new"].append(new_id)
                evo["fitness"][new_id] = f_new
                self._audit(state, {**rec, "outcome": "accepted", "replaced": victim,
                                    "replaced_fitness": evo["fitness"][victim]})
            evo["step"] = step + 1
            self.checkpoint(state)
        state.nir_ids = list(evo["copy"]) + list(evo["new"])
        self._audit(state, {"event": "training-set", "size": len(state.nir_ids), "added": list(evo["new"])})
        state.evo = {}
        state.round += 1
        state.phase = "pap"
        self.checkpoint(state, snapshot=True)
        return state

    # -- driver
    def run(self, instances=None, resume: str | Path | None = None) -> RoundState:
        state = self.load(resume) if resume else self.initialize(instances)
        while state.phase != "done":
            if state.phase == "pap":
                round_done = state.round
                self.evolve_pap(state)
                if state.phase == "done":
                    self.checkpoint(state, snapshot=True, label=f"round-{round_done}")
            elif state.phase == "instances":
                self.evolve_instances(state)
            else:
                raise RuntimeError(f"unknown phase {state.phase!r}")
        if self.out:
            (self.out / "portfolio.json").write_text(portfolio_json(state.portfolio, self.cfg))
            (self.out / "matrix.json").write_text(matrix_json(state.matrix, self.cfg))
        return state

    # -- persistence
    def checkpoint(self, state: RoundState, snapshot: bool = False, label: str | None = None) -> None:
        if not self.out:
            return
        tmp = self.out / "checkpoint.tmp"
        if tmp.exists():
            shutil.rmtree(tmp)
        write_state(tmp, state, self.cfg)
        final = self.out / "checkpoint"
        old = self.out / "checkpoint.old"
        if final.exists():
            os.replace(final, old)
        os.replace(tmp, final)
        if old.exists():
            shutil.rmtree(old)
        if snapshot:
            dest = self.out / "rounds" / (label or f"round-{state.round - 1}")
            if dest.exists():
                shutil.rmtree(dest)
            shutil.copytree(final, dest)

    def load(self, path) -> RoundState:
        state, cfg = read_state(path, self.out and self._path("matrix_records.jsonl"))
        if cfg.to_dict() != self.cfg.to_dict():
            raise ValueError("checkpoint was written with a different configuration")
        return state


def train_instance_nirs(instances, cfg: CoevolutionConfig, log=None):
    """Train one NIR per instance over fresh shared weights; returns ``(shared, {id: NIR}, report)``."""
    ids = [instance_id(i) for i in instances]
    sw = SharedWeights.initialize(instances[0].n_obj, seed=derive_seed(cfg.seed, "shared-weights"))
    if cfg.seq2seq != "none":
        load_seq2seq_into(bundled_seq2seq_path() if cfg.seq2seq == "bundled" else cfg.seq2seq, sw)
    datasets = [sample_dataset(inst, cfg.nir_samples, derive_seed(cfg.seed, "dataset", i), i)
                for inst, i in zip(instances, ids)]
    embs, report = train_nirs(sw, datasets, cfg.nir_epochs, cfg.nir_batch, cfg.nir_lr, cfg.nir_lambda,
                              derive_seed(cfg.seed, "nir-training"), log=log)
    nirs = {i: NIR(sw, e, inst.dim, d.mean, d.std, inst, i) for inst, d, e, i in zip(instances, datasets, embs, ids)}
    return sw, nirs, report


def portfolio_json(P: Portfolio, cfg: CoevolutionConfig) -> str:
    return json.dumps({"config_digest": cfg.digest(), **P.to_dict()}, sort_keys=True, indent=1)


def matrix_json(matrix: PerformanceMatrix, cfg: CoevolutionConfig) -> str:
    return json.dumps({"config_digest": cfg.digest(), **matrix.to_dict()}, sort_keys=True)


def write_state(path, state: RoundState, cfg: CoevolutionConfig) -> None:
    path = Path(path)
    path.mkdir(parents=True)
    (path / "config.json").write_text(json.dumps({"digest": cfg.digest(), "config": cfg.to_dict()},
                                                 sort_keys=True, indent=1))
    (path / "portfolio.json").write_text(portfolio_json(state.portfolio, cfg))
    (path / "matrix.json").write_text(matrix_json(state.matrix, cfg))
    nirs = {}
    for nid, m in state.nirs.items():
        nirs[nid] = {"e": m.embedding, "mean": m.target_mean, "std": m.target_std}
    save_shared(path / "nirs.npz", state.shared, nirs, {"config_digest": cfg.digest()})
    meta = {nid: {"dim": m.dim, "source": instance_id(state.sources[nid]), "parent": m.parent_id}
            for nid, m in state.nirs.items()}
    sources = {}
    for s in state.sources.values():
        sources.setdefault(instance_id(s), instance_to_dict(s))

    def _evo(evo):
        return {**evo, "fitness": {k: v for k, v in evo.get("fitness", {}).items()}}

    body = {"round": state.round, "phase": state.phase, "nir_ids": state.nir_ids, "nirs": meta,
            "sources": sources, "candidates": [c.to_dict() for c in state.candidates],
            "mining_iter": state.mining_iter, "evo": _evo(state.evo) if state.evo else {}}
    (path / "state.json").write_text(json.dumps(body, sort_keys=True))


def read_state(path, record_path=None) -> tuple[RoundState, CoevolutionConfig]:
    path = Path(path)
    cfg = CoevolutionConfig.from_dict(json.loads((path / "config.json").read_text())["config"])
    body = json.loads((path / "state.json").read_text())
    sw, embs, _ = load_shared(path / "nirs.npz")
    srcs = {k: instance_from_dict(v) for k, v in body["sources"].items()}
    nirs, sources = {}, {}
    for nid, meta in body["nirs"].items():
        e = embs[nid]
        inst = srcs[meta["source"]]
        nirs[nid] = NIR(sw, e["e"], meta["dim"], e["mean"], e["std"], inst, nid, parent_id=meta["parent"])
        sources[nid] = inst
    P = Portfolio.from_dict(json.loads((path / "portfolio.json").read_text()))
    matrix = PerformanceMatrix.from_dict(json.loads((path / "matrix.json").read_text()), record_path)
    state = RoundState(body["round"], body["phase"], P, list(body["nir_ids"]), nirs, sources, sw, matrix,
                       [Configuration.from_dict(c) for c in body["candidates"]], body["mining_iter"],
                       body["evo"])
    return state, cfg


def run(instances, config: CoevolutionConfig, out_dir=None, resume=None, log=None) -> RoundState:
    return Coevolution(config, out_dir, log).run(instances, resume)


def initialize(instances, config: CoevolutionConfig, out_dir=None) -> RoundState:
    return Coevolution(config, out_dir).initialize(instances)


def evolve_pap(state: RoundState, config: CoevolutionConfig, out_dir=None) -> RoundState:
    return Coevolution(config, out_dir).evolve_pap(state)


def evolve_instances(state: RoundState, config: CoevolutionConfig, out_dir=None) -> RoundState:
    return Coevolution(config, out_dir).evolve_instances(state)


def smoke_instances(seed: int = 0, problem_class: str = "MKP") -> list:
    return training_instances(problem_class, PROFILE_DIMS["smoke"], 1, seed)
