"""Closed algorithm-descriptor space for the MOEA framework.

A descriptor fixes the structural choices (initialization, variation, update
scheme, archive) and declares the hyperparameters it reads.  A Configuration
binds values to those hyperparameters.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

INIT_SCHEMES = ("uniform", "stratified", "biased")
CROSSOVERS = ("uniform", "one-point", "two-point", "none")
MATING = ("binary-tournament", "random", "neighborhood")
UPDATE_SCHEMES = ("nsga2", "nsga3", "moead", "spea2", "hv")
AGGREGATIONS = ("tchebycheff", "weighted-sum")
KINDS = ("int", "float", "bool")

# Hard bounds every definition of a known hyperparameter must stay inside.
CANONICAL_BOUNDS = {
    "pop_size": (1, 1000),
    "crossover_rate": (0.0, 1.0),
    "mutation_flips": (0.0, 16.0),
    "tournament_size": (2, 10),
    "neighborhood_size": (2, 100),
    "neighborhood_prob": (0.0, 1.0),
    "replace_limit": (1, 50),
    "archive_capacity": (2, 1000),
    "init_bias": (0.01, 0.99),
}


@dataclass(frozen=True)
class HyperparameterDef:
    name: str
    kind: str
    default: object
    categorical: bool = False
    range: tuple = ()
    description: str = ""

    def violations(self) -> list[str]:
        out = []
        if self.kind not in KINDS:
            out.append(f"{self.name}: unknown kind {self.kind!r}")
            return out
        if self.categorical:
            if not self.range:
                out.append(f"{self.name}: categorical value set is empty")
            elif self.default not in self.range:
                out.append(f"{self.name}: default out of range")
            return out
        if self.kind == "bool":
            if not isinstance(self.default, bool):
                out.append(f"{self.name}: default out of range")
            return out
        if len(self.range) != 2:
            out.append(f"{self.name}: numeric range needs [lo, hi]")
            return out
        lo, hi = self.range
        if not lo < hi:
            out.append(f"{self.name}: range needs lo < hi")
        if not self.accepts(self.default):
            out.append(f"{self.name}: default out of range")
        if self.name in CANONICAL_BOUNDS:
            clo, chi = CANONICAL_BOUNDS[self.name]
            if lo < clo or hi > chi:
                out.append(f"{self.name}: range outside allowed bounds [{clo}, {chi}]")
        return out

    def accepts(self, value) -> bool:
        if self.categorical:
            return value in self.range
        if self.kind == "bool":
            return isinstance(value, bool)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        if self.kind == "int" and int(value) != value:
            return False
        lo, hi = self.range
        return lo <= value <= hi

    def coerce(self, value):
        if self.kind == "int" and not self.categorical:
            return int(round(value))
        if self.kind == "float" and not self.categorical:
            return float(value)
        return value

    def to_dict(self) -> dict:
        return {"name": self.name, "type": self.kind, "default": self.default,
                "categorical": self.categorical, "range": list(self.range), "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "HyperparameterDef":
        return cls(name=d["name"], kind=d.get("type", d.get("kind")), default=d["default"],
                   categorical=bool(d.get("categorical", False)), range=tuple(d.get("range", ())),
                   description=d.get("description", ""))


def hp_int(name, default, lo, hi, description=""):
    return HyperparameterDef(name, "int", default, False, (lo, hi), description)


def hp_float(name, default, lo, hi, description=""):
    return HyperparameterDef(name, "float", default, False, (lo, hi), description)


def standard_defs(pop_size=100, crossover_rate=0.9, mutation_flips=1.0, **extra) -> list[HyperparameterDef]:
    defs = [
        hp_int("pop_size", pop_size, 4, 500, "population size"),
        hp_float("crossover_rate", crossover_rate, 0.0, 1.0, "probability a parent pair is recombined"),
        hp_float("mutation_flips", mutation_flips, 0.0, 8.0, "expected flipped bits per child (rate = flips / dim)"),
    ]
    known = {
        "tournament_size": lambda v: hp_int("tournament_size", v, 2, 8, "tournament size for mating"),
        "neighborhood_size": lambda v: hp_int("neighborhood_size", v, 2, 50, "neighbours per subproblem"),
        "neighborhood_prob": lambda v: hp_float("neighborhood_prob", v, 0.0, 1.0,
                                                "probability of mating inside the neighbourhood"),
        "replace_limit": lambda v: hp_int("replace_limit", v, 1, 10, "max replacements per child"),
        "archive_capacity": lambda v: hp_int("archive_capacity", v, 4, 500, "external archive size"),
        "init_bias": lambda v: hp_float("init_bias", v, 0.05, 0.95, "probability of a 1 bit at initialization"),
    }
    for k, v in extra.items():
        defs.append(known[k](v))
    return defs


@dataclass(frozen=True)
class AlgorithmDescriptor:
    init_scheme: str = "uniform"
    crossover: str = "uniform"
    mating_selection: str = "binary-tournament"
    update_scheme: str = "nsga2"
    aggregation: str = "tchebycheff"
    archive: bool = False
    hyperparameters: tuple = field(default_factory=tuple)
    description: str = ""

    def defs(self) -> dict[str, HyperparameterDef]:
        return {d.name: d for d in self.hyperparameters}

    def required_hyperparameters(self) -> list[str]:
        req = ["pop_size", "mutation_flips"]
        if self.crossover != "none":
            req.append("crossover_rate")
        if self.mating_selection == "binary-tournament":
            req.append("tournament_size")
        if self.update_scheme == "moead" or self.mating_selection == "neighborhood":
            req += ["neighborhood_size", "neighborhood_prob"]
        if self.update_scheme == "moead":
            req.append("replace_limit")
        if self.archive or self.update_scheme == "spea2":
            req.append("archive_capacity")
        if self.init_scheme == "biased":
            req.append("init_bias")
        return req

    def to_dict(self) -> dict:
        return {"init_scheme": self.init_scheme,
                "variation": {"crossover": self.crossover, "mutation": "bit-flip",
                              "mating_selection": self.mating_selection},
                "update_scheme": self.update_scheme, "aggregation": self.aggregation,
                "archive": {"enabled": self.archive},
                "hyperparameters": [d.to_dict() for d in self.hyperparameters],
                "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "AlgorithmDescriptor":
        var = d.get("variation", {})
        return cls(init_scheme=d["init_scheme"], crossover=var.get("crossover", "uniform"),
                   mating_selection=var.get("mating_selection", "binary-tournament"),
                   update_scheme=d["update_scheme"], aggregation=d.get("aggregation", "tchebycheff"),
                   archive=bool(d.get("archive", {}).get("enabled", False)),
                   hyperparameters=tuple(HyperparameterDef.from_dict(h) for h in d.get("hyperparameters", ())),
                   description=d.get("description", ""))


def validate_descriptor(descriptor: AlgorithmDescriptor, defs=None) -> list[str]:
    """All schema violations of ``descriptor``; an empty list means valid."""
    out = []
    for attr, allowed in (("init_scheme", INIT_SCHEMES), ("crossover", CROSSOVERS),
                          ("mating_selection", MATING), ("update_scheme", UPDATE_SCHEMES),
                          ("aggregation", AGGREGATIONS)):
        v = getattr(descriptor, attr)
        if v not in allowed:
            out.append(f"{attr}: unknown value {v!r}")
    defs = list(descriptor.hyperparameters if defs is None else defs)
    names = [d.name for d in defs]
    for n in sorted({n for n in names if names.count(n) > 1}):
        out.append(f"{n}: defined more than once")
    for d in defs:
        out.extend(d.violations())
    for n in descriptor.required_hyperparameters():
        if n not in names:
            out.append(f"{n}: hyperparameter used but undefined")
    return out


@dataclass(frozen=True)
class Configuration:
    descriptor: AlgorithmDescriptor
    assignment: dict = field(default_factory=dict)
    label: str = ""

    def values(self) -> dict:
        """Defaults overlaid with the assignment."""
        vals = {d.name: d.default for d in self.descriptor.hyperparameters}
        vals.update(self.assignment)
        return vals

    def violations(self) -> list[str]:
        out = validate_descriptor(self.descriptor)
        defs = self.descriptor.defs()
        for k, v in self.assignment.items():
            if k not in defs:
                out.append(f"{k}: assigned but undefined")
            elif not defs[k].accepts(v):
                out.append(f"{k}: value {v!r} out of range")
        return out

    def with_assignment(self, assignment: dict, label: str | None = None) -> "Configuration":
        return replace(self, assignment=dict(assignment), label=self.label if label is None else label)

    def to_dict(self) -> dict:
        return {"label": self.label, "descriptor": self.descriptor.to_dict(),
                "assignment": {k: self.assignment[k] for k in sorted(self.assignment)}}

    @classmethod
    def from_dict(cls, d: dict) -> "Configuration":
        return cls(AlgorithmDescriptor.from_dict(d["descriptor"]), dict(d.get("assignment", {})), d.get("label", ""))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, s: str) -> "Configuration":
        return cls.from_dict(json.loads(s))

    def key(self) -> str:
        """Identity ignoring the label: descriptor plus fully resolved values."""
        body = {"descriptor": self.descriptor.to_dict(), "values": self.values()}
        body["descriptor"].pop("description", None)
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


CLASSICS = ("nsga2", "nsga3", "moead", "spea2")


def classic_config(name: str) -> Configuration:
    if name == "nsga2":
        d = AlgorithmDescriptor(update_scheme="nsga2", hyperparameters=tuple(standard_defs(tournament_size=2)),
                                description="nondominated sorting with crowding-distance truncation")
    elif name == "nsga3":
        d = AlgorithmDescriptor(update_scheme="nsga3", hyperparameters=tuple(standard_defs(tournament_size=2)),
                                description="nondominated sorting with reference-direction niching")
    elif name == "moead":
        d = AlgorithmDescriptor(update_scheme="moead", mating_selection="neighborhood", aggregation="tchebycheff",
                                hyperparameters=tuple(standard_defs(neighborhood_size=20, neighborhood_prob=0.9,
                                                                    replace_limit=2)),
                                description="decomposition with Tchebycheff subproblems")
    elif name == "spea2":
        d = AlgorithmDescriptor(update_scheme="spea2", archive=True,
                                hyperparameters=tuple(standard_defs(tournament_size=2, archive_capacity=100)),
                                description="strength fitness with k-nearest density archive")
    else:
        raise ValueError(f"unknown classic algorithm {name!r}; expected one of {CLASSICS}")
    return Configuration(d, {}, name)
