from papforge.opgen.catalog import CATALOG, catalog_proposal, catalog_size
from papforge.opgen.llm import (KEY_ENV, TEMPLATE_VERSION, LLMProvider, ProposalRejected, ProviderConfigError,
                                TransportError, load_template, render_prompts)
from papforge.opgen.proposal import (SCHEMA_TEMPLATE, OperatorProposal, SchemaError, Validation, parse_proposal,
                                     validate_proposal)
from papforge.opgen.summary import PerformanceSummary, SolverBlock, build_summary, dense_ranks


class CatalogProvider:
    """Deterministic offline provider; needs no network."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def propose(self, summary=None, round_index: int = 0, iteration: int = 0, **_) -> OperatorProposal:
        return catalog_proposal(round_index, iteration, self.seed)


def propose(summary, provider="catalog", seed: int = 0, round_index: int = 0, iteration: int = 0, **kw):
    if provider == "catalog":
        return catalog_proposal(round_index, iteration, seed)
    if provider == "llm":
        provider = LLMProvider(**kw)
    return provider.propose(summary)


__all__ = [
    "CATALOG", "catalog_proposal", "catalog_size", "CatalogProvider", "propose",
    "KEY_ENV", "TEMPLATE_VERSION", "LLMProvider", "ProposalRejected", "ProviderConfigError", "TransportError",
    "load_template", "render_prompts",
    "SCHEMA_TEMPLATE", "OperatorProposal", "SchemaError", "Validation", "parse_proposal", "validate_proposal",
    "PerformanceSummary", "SolverBlock", "build_summary", "dense_ranks",
]
