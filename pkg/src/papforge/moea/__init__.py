"""Unified MOEA framework over a closed descriptor space."""

from papforge.moea.descriptor import (AGGREGATIONS, CLASSICS, CROSSOVERS, INIT_SCHEMES, MATING, UPDATE_SCHEMES,
                                      AlgorithmDescriptor, Configuration, HyperparameterDef, classic_config,
                                      standard_defs, validate_descriptor)
from papforge.moea.engine import (BudgetExceeded, BudgetTooSmall, InvalidConfiguration, ParetoResult, RepairViolation,
                                  RunBudget, dry_run, run_moea)

__all__ = [
    "AGGREGATIONS", "CLASSICS", "CROSSOVERS", "INIT_SCHEMES", "MATING", "UPDATE_SCHEMES", "AlgorithmDescriptor",
    "BudgetExceeded", "BudgetTooSmall", "Configuration", "HyperparameterDef", "InvalidConfiguration",
    "ParetoResult", "RepairViolation", "RunBudget", "classic_config", "dry_run", "run_moea", "standard_defs",
    "validate_descriptor",
]
