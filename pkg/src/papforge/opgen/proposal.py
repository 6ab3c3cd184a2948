"""Operator proposals: the structured object a provider returns, its schema check, and the
two-stage validation (schema, then a short simulated run)."""

from __future__ import annotations

import json
from dataclasses import dataclass

from papforge.moea.descriptor import (AGGREGATIONS, CROSSOVERS, INIT_SCHEMES, KINDS, MATING, UPDATE_SCHEMES,
                                      AlgorithmDescriptor, Configuration, HyperparameterDef, validate_descriptor)
from papforge.moea.engine import dry_run

HP_FIELDS = ("name", "type", "default", "categorical", "range", "description")
RESPONSE_FIELDS = ("hyperparameters", "descriptor", "description")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorProposal:
    hyperparameters: tuple
    descriptor: AlgorithmDescriptor
    description: str

    def configuration(self, label: str = "") -> Configuration:
        """Configuration at the proposal's default values."""
        d = AlgorithmDescriptor(self.descriptor.init_scheme, self.descriptor.crossover,
                                self.descriptor.mating_selection, self.descriptor.update_scheme,
                                self.descriptor.aggregation, self.descriptor.archive,
                                tuple(self.hyperparameters), self.description)
        return Configuration(d, {}, label)

    def to_dict(self) -> dict:
        desc = self.descriptor.to_dict()
        desc.pop("hyperparameters")
        desc.pop("description")
        return {"hyperparameters": [h.to_dict() for h in self.hyperparameters], "descriptor": desc,
                "description": self.description}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_hp(i: int, h) -> list[str]:
    if not isinstance(h, dict):
        return [f"hyperparameters[{i}]: expected an object"]
    out = [f"hyperparameters[{i}]: missing field {k!r}" for k in HP_FIELDS if k not in h]
    if out:
        return out
    if not isinstance(h["name"], str) or not h["name"]:
        out.append(f"hyperparameters[{i}]: name must be a non-empty string")
    if h["type"] not in KINDS:
        out.append(f"hyperparameters[{i}]: type must be one of {KINDS}")
    if not isinstance(h["categorical"], bool):
        out.append(f"hyperparameters[{i}]: categorical must be a boolean")
    if not isinstance(h["range"], list):
        out.append(f"hyperparameters[{i}]: range must be a list")
    if isinstance(h["default"], str):
        out.append(f"hyperparameters[{i}]: default must not be a string")
    return out


def parse_proposal(obj) -> OperatorProposal:
    """Build a proposal from a decoded response object (or its JSON text); raises SchemaError."""
    if isinstance(obj, (str, bytes)):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"response is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError("response must be a single JSON object")
    errs = [f"missing field {k!r}" for k in RESPONSE_FIELDS if k not in obj]
    extra = sorted(set(obj) - set(RESPONSE_FIELDS))
    if extra:
        errs.append(f"unexpected fields {extra}")
    if errs:
        raise SchemaError("; ".join(errs))
    if not isinstance(obj["hyperparameters"], list):
        raise SchemaError("hyperparameters must be a list")
    if not isinstance(obj["description"], str):
        raise SchemaError("description must be a string")
    d = obj["descriptor"]
    if not isinstance(d, dict):
        raise SchemaError("descriptor must be an object")
    for i, h in enumerate(obj["hyperparameters"]):
        errs.extend(_check_hp(i, h))
    for k in ("init_scheme", "update_scheme"):
        if k not in d:
            errs.append(f"descriptor: missing field {k!r}")
    if errs:
        raise SchemaError("; ".join(errs))
    var = d.get("variation", {})
    if not isinstance(var, dict) or not isinstance(d.get("archive", {}), dict):
        raise SchemaError("descriptor: variation and archive must be objects")
    if var.get("mutation", "bit-flip") != "bit-flip":
        raise SchemaError("descriptor: only bit-flip mutation is available")
    hps = tuple(HyperparameterDef.from_dict(h) for h in obj["hyperparameters"])
    desc = AlgorithmDescriptor.from_dict({**d, "hyperparameters": [], "description": obj["description"]})
    return OperatorProposal(hps, desc, obj["description"])


@dataclass(frozen=True)
class Validation:
    ok: bool
    stage: str = ""
    reason: str = ""


def validate_proposal(proposal: OperatorProposal | dict | str, seed: int = 0) -> Validation:
    """Schema check, then a dry run on a small fixed instance.  Rejections are returned, not raised."""
    if not isinstance(proposal, OperatorProposal):
        try:
            proposal = parse_proposal(proposal)
        except SchemaError as exc:
            return Validation(False, "schema", str(exc))
    config = proposal.configuration()
    bad = validate_descriptor(config.descriptor)
    if bad:
        return Validation(False, "schema", "; ".join(bad))
    ok, reason = dry_run(config, seed)
    if not ok:
        return Validation(False, "simulation", reason)
    return Validation(True)


SCHEMA_TEMPLATE = {
    "hyperparameters": [{
        "name": "hyperparameter name",
        "type": "one of: int, float, bool",
        "default": "default value, typed like the hyperparameter (not a string)",
        "categorical": "true when only a few listed values are allowed, false for a numeric interval",
        "range": "[low, high] for a numeric interval, or the list of allowed values when categorical",
        "description": "what the hyperparameter controls",
    }],
    "descriptor": {
        "init_scheme": "one of: " + ", ".join(INIT_SCHEMES),
        "variation": {"crossover": "one of: " + ", ".join(CROSSOVERS), "mutation": "bit-flip",
                      "mating_selection": "one of: " + ", ".join(MATING)},
        "update_scheme": "one of: " + ", ".join(UPDATE_SCHEMES),
        "aggregation": "one of: " + ", ".join(AGGREGATIONS) + " (read only by the moead update)",
        "archive": {"enabled": "true or false"},
    },
    "description": "short description of the algorithm",
}
