"""Chat-completion provider that asks a language model for a descriptor proposal."""

from __future__ import annotations

import json
import os
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from string import Template

from papforge.moea.descriptor import (AGGREGATIONS, CANONICAL_BOUNDS, CROSSOVERS, INIT_SCHEMES, MATING,
                                      UPDATE_SCHEMES)
from papforge.opgen.proposal import SCHEMA_TEMPLATE, OperatorProposal, SchemaError, parse_proposal
from papforge.opgen.summary import PerformanceSummary

TEMPLATE_VERSION = "v1"
KEY_ENV = "PAPFORGE_LLM_KEY"
MODEL_ENV = "PAPFORGE_LLM_MODEL"


class TransportError(RuntimeError):
    """The endpoint could not be reached or answered with an HTTP error."""


class ProposalRejected(RuntimeError):
    def __init__(self, message: str, last_response: str):
        super().__init__(message)
        self.last_response = last_response


class ProviderConfigError(RuntimeError):
    pass


def load_template(name: str, version: str = TEMPLATE_VERSION) -> str:
    return (resources.files("papforge.opgen") / "templates" / f"{name}_{version}.txt").read_text()


def _framework_text() -> str:
    rows = [("init_scheme", INIT_SCHEMES), ("variation.crossover", CROSSOVERS),
            ("variation.mating_selection", MATING), ("update_scheme", UPDATE_SCHEMES),
            ("aggregation", AGGREGATIONS), ("archive.enabled", ("true", "false"))]
    return "\n".join(f"- {k}: {', '.join(v)}" for k, v in rows)


def _bounds_text() -> str:
    return "\n".join(f"- {k}: [{lo}, {hi}]" for k, (lo, hi) in CANONICAL_BOUNDS.items())


def render_prompts(summary: PerformanceSummary | str, dims=(32, 100), n_obj=(2, 3)) -> tuple[str, str]:
    schema = json.dumps(SCHEMA_TEMPLATE, indent=2)
    text = summary if isinstance(summary, str) else summary.render()
    system = Template(load_template("system")).substitute(schema=schema)
    user = Template(load_template("user")).substitute(
        schema=schema, framework=_framework_text(), bounds=_bounds_text(), summary=text,
        dim_text=f"{dims[0]} to {dims[1]}", obj_text=" or ".join(str(n) for n in n_obj))
    return system, user


def _post(url: str, body: dict, key: str, timeout: float) -> dict:
    req = urllib.request.Request(url, data=json.dumps(body).encode(), method="POST",
                                 headers={"Content-Type": "application/json", "Authorization": f"Bearer {key}"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        raise TransportError(f"HTTP {exc.code} from {url}") from None
    except (urllib.error.URLError, socket.timeout, ConnectionError) as exc:
        raise TransportError(f"cannot reach {url}: {exc}") from None
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        raise TransportError(f"{url} returned a non-JSON body") from None


@dataclass
class LLMProvider:
    base_url: str = "https://openrouter.ai/api/v1"
    model: str | None = None
    temperature: float = 1.0
    max_retries: int = 3
    timeout: float = 300.0
    api_key: str | None = None

    def key(self) -> str:
        k = self.api_key or os.environ.get(KEY_ENV)
        if not k:
            raise ProviderConfigError(f"set {KEY_ENV} to use the language-model provider")
        return k

    def model_id(self) -> str:
        m = self.model or os.environ.get(MODEL_ENV)
        if not m:
            raise ProviderConfigError(f"pass a model name or set {MODEL_ENV}")
        return m

    def complete(self, messages: list[dict]) -> str:
        body = {"model": self.model_id(), "messages": messages, "temperature": self.temperature,
                "response_format": {"type": "json_object"}}
        out = _post(self.base_url.rstrip("/") + "/chat/completions", body, self.key(), self.timeout)
        try:
            return out["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError("response has no choices[0].message.content") from None

    def propose(self, summary, dims=(32, 100), n_obj=(2, 3), log=None) -> OperatorProposal:
        """Ask for a proposal; schema failures are fed back and retried up to ``max_retries`` times."""
        system, user = render_prompts(summary, dims, n_obj)
        messages = [{"role": "system", "content": system}, {"role": "user", "content": user}]
        last = ""
        for attempt in range(self.max_retries + 1):
            last = self.complete(messages)
            try:
                return parse_proposal(last)
            except SchemaError as exc:
                if log:
                    log({"event": "schema-failure", "attempt": attempt, "reason": str(exc)})
                messages += [{"role": "assistant", "content": last},
                             {"role": "user", "content": f"The reply was rejected: {exc}. "
                                                         "Return one corrected JSON object only."}]
        raise ProposalRejected(f"no schema-valid proposal after {self.max_retries} retries", last)
