"""The four binary multi-objective problem classes.

Instances are immutable after construction; ``evaluate`` and ``repair`` are
pure and accept either one bit vector or a (B, dim) batch.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from papforge.problems import mccp, mcimp, mkp, mmmp
from papforge.problems.base import (PROBLEM_CLASSES, SPLITS, DimensionMismatch, Evaluable, as_bits,
                                    random_bits)
from papforge.problems.mccp import MCCPInstance
from papforge.problems.mcimp import MCIMPInstance
from papforge.problems.mkp import MKPInstance
from papforge.problems.mmmp import InfeasibleGeneration, MMMPInstance
from papforge.seeding import rng_for

Instance = Union[MMMPInstance, MKPInstance, MCCPInstance, MCIMPInstance]

_GENERATORS = {"MMMP": mmmp.generate, "MKP": mkp.generate, "MCCP": mccp.generate, "MCIMP": mcimp.generate}
_CLASSES = {"MMMP": MMMPInstance, "MKP": MKPInstance, "MCCP": MCCPInstance, "MCIMP": MCIMPInstance}
MIN_DIM = 4
FORMAT_VERSION = 1


def generate_instance(problem_class: str, dim: int, split: str = "train", seed: int = 0, **kwargs) -> Instance:
    """Deterministically build one instance of ``problem_class``."""
    if problem_class not in _GENERATORS:
        raise ValueError(f"unknown problem class {problem_class!r}; expected one of {PROBLEM_CLASSES}")
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    if dim < MIN_DIM:
        raise ValueError(f"dim must be >= {MIN_DIM}")
    rng = rng_for(seed, "instance", problem_class, dim, split)
    return _GENERATORS[problem_class](dim, split, rng, seed, **kwargs)


def evaluate(instance: Instance, x) -> np.ndarray:
    return instance.evaluate(x)


def repair(instance: Instance, x) -> np.ndarray:
    return instance.repair(x)


def instance_id(instance: Instance) -> str:
    return f"{instance.problem_class}-{instance.split}-d{instance.dim}-s{instance.seed}"


def instance_to_dict(instance: Instance) -> dict:
    return {"format": "papforge-instance", "version": FORMAT_VERSION, "class": instance.problem_class,
            "dim": instance.dim, "n_obj": instance.n_obj, "split": instance.split, "seed": instance.seed,
            "params": instance.to_dict()}


def instance_from_dict(d: dict) -> Instance:
    if d.get("format") != "papforge-instance":
        raise ValueError("not a papforge instance record")
    inst = _CLASSES[d["class"]].from_dict(d["params"], d["split"], d["seed"])
    if inst.dim != d["dim"]:
        raise ValueError("instance record dim does not match its parameters")
    return inst


def save_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance)))


def load_instance(path: str | Path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))


__all__ = [
    "PROBLEM_CLASSES", "SPLITS", "DimensionMismatch", "Evaluable", "InfeasibleGeneration", "Instance",
    "MCCPInstance", "MCIMPInstance", "MKPInstance", "MMMPInstance", "as_bits", "evaluate",
    "generate_instance", "instance_from_dict", "instance_id", "instance_to_dict", "load_instance",
    "random_bits", "repair", "save_instance",
]
