import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from papforge.moea import CLASSICS, classic_config
from papforge.opgen import (CATALOG, KEY_ENV, CatalogProvider, LLMProvider, ProposalRejected, ProviderConfigError,
                            SchemaError, TransportError, build_summary, catalog_proposal, catalog_size, dense_ranks,
                            load_template, parse_proposal, propose, render_prompts, validate_proposal)
from papforge.portfolio import MissingEntry


class TableMatrix:
    """Stand-in for a performance matrix with fixed values."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def table(self, configs, ids):
        if np.isnan(self.values).any():
            raise MissingEntry("hole")
        return self.values


def _pair():
    return [classic_config(CLASSICS[i]) for i in range(2)]


def test_dense_ranks():
    np.testing.assert_array_equal(dense_ranks([0.9, 0.7, 0.9, 0.1]), [1, 2, 1, 3])
    np.testing.assert_array_equal(dense_ranks([0.5, 0.5]), [1, 1])


def test_summary_hand_ranking():
    s = build_summary(_pair(), [("a", 32), ("b", 64)], TableMatrix([[0.9, 0.8], [0.7, 0.85]]))
    assert s.solvers[0].ranks == [1, 2]
    assert s.solvers[1].ranks == [2, 1]
    assert s.by_dimension()[32] == {0: {1: 1}, 1: {2: 1}}
    text = s.render()
    assert "NIR 1 (dim=64): HV=0.850000, Rank=1" in text
    assert text == build_summary(_pair(), [("a", 32), ("b", 64)], TableMatrix([[0.9, 0.8], [0.7, 0.85]])).render()


def test_summary_ties_and_rank_one_counts():
    s = build_summary(_pair(), [("a", 8), ("b", 8), ("c", 9)], TableMatrix([[0.5, 0.2, 0.3]] * 2))
    assert all(r == 1 for b in s.solvers for r in b.ranks)
    rng = np.random.default_rng(0)
    V = rng.integers(0, 3, size=(2, 6)) / 2
    s = build_summary(_pair(), [(str(j), 8) for j in range(6)], TableMatrix(V))
    assert sum(b.rank_counts().get(1, 0) for b in s.solvers) >= 6
    for j in range(6):
        got = sorted({b.ranks[j] for b in s.solvers})
        assert got == list(range(1, len(got) + 1))


def test_summary_incomplete_matrix():
    with pytest.raises(MissingEntry):
        build_summary(_pair(), [("a", 8)], TableMatrix([[np.nan], [0.1]]))


def test_catalog_library():
    assert catalog_size() >= 20
    dumps = [p.dumps() for p in CATALOG[:20]]
    assert len(set(dumps)) == 20
    for p in CATALOG:
        v = validate_proposal(p)
        assert v.ok, (p.description, v)


def test_catalog_determinism_and_cycle():
    assert catalog_proposal(2, 5, seed=9) == catalog_proposal(2, 5, seed=9)
    seen = {catalog_proposal(1, i, seed=3).dumps() for i in range(catalog_size())}
    assert len(seen) == catalog_size()
    assert CatalogProvider(seed=3).propose(None, 1, 4) == catalog_proposal(1, 4, seed=3)
    assert propose(None, "catalog", seed=3, round_index=1, iteration=4) == catalog_proposal(1, 4, seed=3)


def test_proposal_roundtrip():
    p = CATALOG[3]
    assert parse_proposal(p.dumps()) == p
    assert parse_proposal(json.loads(p.dumps())).configuration().key() == p.configuration().key()


@pytest.mark.parametrize("mutate, fragment", [
    (lambda d: d.pop("hyperparameters"), "missing field 'hyperparameters'"),
    (lambda d: d.update(code="print(1)"), "unexpected fields"),
    (lambda d: d["hyperparameters"][0].pop("range"), "missing field 'range'"),
    (lambda d: d["hyperparameters"][0].update(default="100"), "must not be a string"),
    (lambda d: d["descriptor"].pop("update_scheme"), "missing field 'update_scheme'"),
    (lambda d: d["descriptor"]["variation"].update(mutation="swap"), "bit-flip"),
])
def test_schema_failures(mutate, fragment):
    d = json.loads(CATALOG[0].dumps())
    mutate(d)
    with pytest.raises(SchemaError, match=fragment):
        parse_proposal(d)
    v = validate_proposal(d)
    assert not v.ok and v.stage == "schema"


def test_non_json_and_non_object():
    with pytest.raises(SchemaError):
        parse_proposal("{not json")
    with pytest.raises(SchemaError):
        parse_proposal("[1, 2]")


def test_default_outside_range_is_schema_rejection():
    d = json.loads(CATALOG[0].dumps())
    for h in d["hyperparameters"]:
        if h["name"] == "crossover_rate":
            h["default"] = 1.7
    v = validate_proposal(d)
    assert not v.ok and v.stage == "schema" and "default out of range" in v.reason


def test_simulation_rejection():
    # a population larger than the dry-run budget cannot finish initialization
    d = json.loads(CATALOG[0].dumps())
    for h in d["hyperparameters"]:
        if h["name"] == "pop_size":
            h["range"], h["default"] = [2, 1000], 1000
    v = validate_proposal(d)
    assert not v.ok and v.stage == "simulation" and "budget smaller than population" in v.reason


def test_prompts_render_deterministically():
    s = build_summary(_pair(), [("a", 32)], TableMatrix([[0.9], [0.7]]))
    system, user = render_prompts(s)
    assert (system, user) == render_prompts(s)
    assert "Performance Summary of Solvers" in user
    assert '"hyperparameters"' in system and '"descriptor"' in user
    assert "32 to 100" in user
    assert "$" not in user.replace("$schema", "")
    assert load_template("system").strip() and load_template("user").strip()


# ------------------------------------------------------------------ local endpoint

class _Endpoint:
    def __init__(self, replies, status=200):
        self.replies = list(replies)
        self.requests = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                outer.requests.append({"path": self.path, "auth": self.headers.get("Authorization"), "body": body})
                if status != 200:
                    self.send_response(status)
                    self.end_headers()
                    return
                content = outer.replies.pop(0) if len(outer.replies) > 1 else outer.replies[0]
                data = json.dumps({"choices": [{"message": {"content": content}}]}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *a):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}/v1"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


SUMMARY = "Performance Summary of Solvers\n(empty)\n"


def test_llm_provider_success_after_schema_retry():
    good = CATALOG[5].dumps()
    bad = json.dumps({"descriptor": {}, "description": "x"})
    with _Endpoint([bad, good]) as ep:
        p = LLMProvider(base_url=ep.url, model="test-model", api_key="k", timeout=5)
        events = []
        got = p.propose(SUMMARY, log=events.append)
    assert got == CATALOG[5]
    assert len(ep.requests) == 2
    first, second = ep.requests
    assert first["path"] == "/v1/chat/completions" and first["auth"] == "Bearer k"
    assert first["body"]["model"] == "test-model"
    assert first["body"]["response_format"] == {"type": "json_object"}
    assert len(second["body"]["messages"]) == 4
    assert "missing field 'hyperparameters'" in second["body"]["messages"][-1]["content"]
    assert events[0]["event"] == "schema-failure"


def test_llm_provider_gives_up_after_three_retries():
    bad = json.dumps({"descriptor": {}, "description": "x"})
    with _Endpoint([bad]) as ep:
        p = LLMProvider(base_url=ep.url, model="m", api_key="k", timeout=5)
        with pytest.raises(ProposalRejected) as info:
            p.propose(SUMMARY)
    assert len(ep.requests) == 4
    assert info.value.last_response == bad


def test_llm_transport_errors():
    with _Endpoint(["{}"], status=500) as ep:
        with pytest.raises(TransportError, match="HTTP 500"):
            LLMProvider(base_url=ep.url, model="m", api_key="k", timeout=5).propose(SUMMARY)
    with _Endpoint(["{}"]) as ep:
        url = ep.url
    with pytest.raises(TransportError):
        LLMProvider(base_url=url, model="m", api_key="k", timeout=2).propose(SUMMARY)


def test_llm_configuration_errors(monkeypatch):
    monkeypatch.delenv(KEY_ENV, raising=False)
    monkeypatch.delenv("PAPFORGE_LLM_MODEL", raising=False)
    with pytest.raises(ProviderConfigError):
        LLMProvider(model="m").key()
    with pytest.raises(ProviderConfigError):
        LLMProvider(api_key="k").model_id()
    monkeypatch.setenv(KEY_ENV, "from-env")
    monkeypatch.setenv("PAPFORGE_LLM_MODEL", "env-model")
    assert LLMProvider().key() == "from-env"
    assert LLMProvider().model_id() == "env-model"
