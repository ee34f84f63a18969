import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from hesitator.catalog import ProfileConfig, generate_profile
from hesitator.dialogue import ConfigurationError, Decision, ProtocolError, SalesAgentConfig, run_session
from hesitator.external import (
    ENDPOINT_VAR,
    KEY_VAR,
    ExternalPerception,
    ExternalResponder,
    ExternalServiceError,
    ExternalTextClient,
    external_providers,
)
from hesitator.hesitation import PerceptionError
from hesitator.selection import SelectionOutcome


class FakeService:
    """Scripted JSON endpoint: each request pops the next (status, body) reply."""

    def __init__(self):
        self.replies = []
        self.requests = []
        service = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers["Content-Length"]))
                service.requests.append((json.loads(body), self.headers.get("Authorization")))
                status, payload = service.replies.pop(0) if service.replies else service.default(json.loads(body))
                data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}/complete"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def default(self, req):
        prompt = req["prompt"]
        if prompt.startswith("Rate how"):
            return 200, {"completion": json.dumps(dict.fromkeys(
                ("assortment", "dominance", "alignability", "attribute_count", "format_complexity"), 2))}
        if "Reply with exactly one of" in prompt:
            return 200, {"completion": prompt.split("one of: ")[1].split(",")[0].rstrip(".")}
        return 200, {"text": "Sounds fine."}


@pytest.fixture
def service():
    s = FakeService()
    s.thread.start()
    yield s
    s.server.shutdown()
    s.server.server_close()


def test_completion_round_trip(service):
    service.replies = [(200, {"completion": "hello"}), (200, {"text": "hi"})]
    c = ExternalTextClient(service.url, key="k1", retries=0)
    assert c.complete("p") == "hello"
    assert c.complete("q") == "hi"
    assert service.requests[0] == ({"prompt": "p"}, "Bearer k1")


def test_retries_server_errors(service):
    service.replies = [(503, {}), (500, {}), (200, {"completion": "ok"})]
    assert ExternalTextClient(service.url, retries=2).complete("p") == "ok"
    assert len(service.requests) == 3


def test_client_errors_are_not_retried(service):
    service.replies = [(401, {}), (200, {"completion": "never"})]
    with pytest.raises(ExternalServiceError, match="HTTP 401"):
        ExternalTextClient(service.url, retries=3).complete("p")
    assert len(service.requests) == 1


def test_bad_payloads(service):
    service.replies = [(200, b"not json"), (200, {"other": 1})]
    c = ExternalTextClient(service.url, retries=0)
    with pytest.raises(ExternalServiceError, match="not JSON"):
        c.complete("p")
    with pytest.raises(ExternalServiceError, match="no completion"):
        c.complete("p")


def test_unreachable_endpoint():
    with pytest.raises(ExternalServiceError):
        ExternalTextClient("http://127.0.0.1:9/none", timeout=0.5, retries=1).complete("p")


def test_from_env(monkeypatch):
    monkeypatch.delenv(ENDPOINT_VAR, raising=False)
    with pytest.raises(ConfigurationError, match=ENDPOINT_VAR):
        ExternalTextClient.from_env()
    monkeypatch.setenv(ENDPOINT_VAR, "http://example.invalid/x")
    monkeypatch.setenv(KEY_VAR, "secret")
    c = ExternalTextClient.from_env(retries=0)
    assert c.key == "secret" and c.retries == 0


class Sales:
    rendered_text = "three items"


def test_perception_parsing(service):
    p = ExternalPerception(ExternalTextClient(service.url, retries=0))
    service.replies = [(200, {"completion": 'Sure: {"assortment": 1, "dominance": 2, "alignability": 3, "attribute_count": 1, "format_complexity": 2}'})]
    leaves = p.perceive(Sales(), None)
    assert (leaves.assortment, leaves.alignability) == (1, 3)
    service.replies = [(200, {"completion": '{"assortment": 5}'})]
    with pytest.raises(PerceptionError):
        p.perceive(Sales(), None)
    service.replies = [(200, {"completion": "no idea"})]
    with pytest.raises(PerceptionError):
        p.perceive(Sales(), None)


def test_responder_enforces_intent_vocabulary(service):
    r = ExternalResponder(ExternalTextClient(service.url, retries=0))
    reject = Decision("reject", SelectionOutcome("reject", reject_reason="no_candidates"))
    service.replies = [(200, {"completion": "ask_clarification"})]
    assert r.select_action(None, None, reject).intent == "ask_clarification"
    service.replies = [(200, {"completion": "accept_offer"})]
    with pytest.raises(ProtocolError, match="contradicts"):
        r.select_action(None, None, reject)
    service.replies = [(200, {"completion": "wave"})]
    with pytest.raises(ProtocolError, match="unknown intent"):
        r.select_action(None, None, reject)


def test_session_with_external_providers(service, monkeypatch, catalog):
    monkeypatch.setenv(ENDPOINT_VAR, service.url)
    providers = external_providers(retries=0)
    st, w, k = generate_profile(ProfileConfig(2), catalog)
    res = run_session(st, w, k, catalog, SalesAgentConfig(3, 4), providers=providers, seed=1, turn_limit=5)
    assert res.status == "ok"
    service.server.shutdown()
    service.server.server_close()
    res = run_session(st, w, k, catalog, SalesAgentConfig(3, 4), providers=providers, seed=1, turn_limit=5)
    assert res.status == "aborted" and res.diagnostic.startswith("turn 1:")
