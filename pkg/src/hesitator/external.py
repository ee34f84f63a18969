"""Optional text-generation providers backed by a JSON-over-HTTP endpoint.

The endpoint receives ``{"prompt": "..."}`` and must answer with
``{"completion": "..."}`` (a ``"text"`` key is accepted too). Endpoint and
credential come from ``HESITATOR_LLM_ENDPOINT`` and ``HESITATOR_LLM_KEY``.
"""

from __future__ import annotations

import json
import os
import re
import time
import urllib.error
import urllib.request
from typing import Optional

from .dialogue import INTENTS, ConfigurationError, Providers, ProtocolError, UserAction, intent_for
from .hesitation import PerceivedLeaves, PerceptionError

ENDPOINT_VAR = "HESITATOR_LLM_ENDPOINT"
KEY_VAR = "HESITATOR_LLM_KEY"


class ExternalServiceError(RuntimeError):
    pass


class ExternalTextClient:
    def __init__(self, endpoint: str, key: Optional[str] = None, timeout: float = 10.0, retries: int = 2):
        if not endpoint:
            raise ConfigurationError(f"no endpoint; set {ENDPOINT_VAR}")
        if retries < 0:
            raise ConfigurationError("retries must be >= 0")
        self.endpoint = endpoint
        self.key = key
        self.timeout = timeout
        self.retries = retries

    @classmethod
    def from_env(cls, timeout: float = 10.0, retries: int = 2) -> "ExternalTextClient":
        endpoint = os.environ.get(ENDPOINT_VAR, "")
        if not endpoint:
            raise ConfigurationError(
                f"--provider external needs {ENDPOINT_VAR} set to a JSON completion endpoint"
            )
        return cls(endpoint, os.environ.get(KEY_VAR) or None, timeout, retries)

    def complete(self, prompt: str) -> str:
        body = json.dumps({"prompt": prompt}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.key:
            headers["Authorization"] = f"Bearer {self.key}"
        last = "no attempt made"
        for attempt in range(self.retries + 1):
            req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                last = f"HTTP {exc.code}"
                if exc.code < 500:
                    break
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                last = str(exc)
            except json.JSONDecodeError:
                last = "response is not JSON"
                break
            else:
                text = payload.get("completion", payload.get("text")) if isinstance(payload, dict) else None
                if not isinstance(text, str):
                    last = "response has no completion text"
                    break
                return text
            if attempt < self.retries:
                time.sleep(0.05 * (attempt + 1))
        raise ExternalServiceError(f"{self.endpoint}: {last}")


LEAF_KEYS = ("assortment", "dominance", "alignability", "attribute_count", "format_complexity")


def _json_object(text: str) -> dict:
    match = re.search(r"\{.*\}", text, re.S)
    if not match:
        raise ValueError("no JSON object in completion")
    obj = json.loads(match.group(0))
    if not isinstance(obj, dict):
        raise ValueError("completion is not a JSON object")
    return obj


class ExternalPerception:
    def __init__(self, client: ExternalTextClient):
        self.client = client

    def perceive(self, sales, state) -> PerceivedLeaves:
        prompt = (
            "Rate how overwhelming this recommendation is for a shopper. Answer with a JSON object "
            f"with integer keys {', '.join(LEAF_KEYS)}, each 1 (low), 2 or 3 (high).\n\n"
            + sales.rendered_text
        )
        try:
            obj = _json_object(self.client.complete(prompt))
            values = {k: obj[k] for k in LEAF_KEYS}
        except ExternalServiceError as exc:
            raise PerceptionError(str(exc)) from exc
        except (KeyError, ValueError) as exc:
            raise PerceptionError(f"unusable perception answer: {exc}") from exc
        for k, v in values.items():
            if v not in (1, 2, 3) or isinstance(v, bool):
                raise PerceptionError(f"leaf {k} must be 1, 2 or 3, got {v!r}")
        return PerceivedLeaves(**values)


class ExternalResponder:
    def __init__(self, client: ExternalTextClient):
        self.client = client

    def _ask(self, prompt: str) -> str:
        try:
            return self.client.complete(prompt).strip()
        except ExternalServiceError as exc:
            raise ProtocolError(str(exc)) from exc

    def select_action(self, state, history, decision) -> UserAction:
        allowed = {
            "accept": ("accept_offer",),
            "defer": ("defer_with_rationale",),
            "reject": ("reject_with_reason", "ask_clarification"),
        }[decision.outcome]
        prompt = (
            f"You are a shopper who decided to {decision.outcome} the offer. "
            f"Reply with exactly one of: {', '.join(allowed)}."
        )
        intent = self._ask(prompt)
        if intent not in INTENTS:
            raise ProtocolError(f"unknown intent {intent!r}")
        if intent not in allowed:
            raise ProtocolError(f"intent {intent!r} contradicts outcome {decision.outcome!r}")
        return UserAction(intent)

    def synthesize(self, state, history, sales, decision, action) -> str:
        prompt = (
            f"You are a shopper looking for {state.scenario.needs_text}. The assistant said:\n"
            f"{sales.rendered_text}\n\nWrite one short reply that expresses {action.intent.replace('_', ' ')}."
        )
        return self._ask(prompt)


def external_providers(catalog=None, timeout: float = 10.0, retries: int = 2) -> Providers:
    client = ExternalTextClient.from_env(timeout, retries)
    return Providers(ExternalPerception(client), ExternalResponder(client))


__all__ = [
    "ENDPOINT_VAR",
    "KEY_VAR",
    "ExternalPerception",
    "ExternalResponder",
    "ExternalServiceError",
    "ExternalTextClient",
    "external_providers",
    "intent_for",
]
