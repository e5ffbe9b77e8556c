"""Prompt assembly and a minimal chat-completions client."""

from __future__ import annotations

import json
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from typing import Sequence
from urllib.parse import urlparse

from .program import registry_signatures, score_function_list

FUNCTIONS_PLACEHOLDER = "<[REGISTERED_FUNCTIONS_PLACEHOLDER]>"
SCORE_FUNCTIONS_PLACEHOLDER = "<[REGISTERED_SCORE_FUNCTIONS_PLACEHOLDER]>"
_ROLE_MARKER = re.compile(r"<\[(SYSTEM|USER|ASSISTANT)\]>")


class TemplateError(RuntimeError):
    pass


class LlmError(RuntimeError):
    """Failure talking to the endpoint. `status` is set for HTTP errors."""

    def __init__(self, message: str, status: int | None = None, body: str | None = None):
        super().__init__(message)
        self.status = status
        self.body = body


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad role {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class LlmConfig:
    endpoint_url: str
    model_name: str = "default"
    temperature: float = 0.0
    max_output_tokens: int = 1024
    api_key_env: str = "LLM_API_KEY"
    timeout: float = 120.0
    retries: int = 0
    audit_log: str | None = None

    def __post_init__(self):
        parsed = urlparse(self.endpoint_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"malformed endpoint url {self.endpoint_url!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.retries not in (0, 1):
            raise ValueError("at most one retry is supported")


def _template(name: str) -> str:
    try:
        return resources.files("cspground").joinpath("templates", name).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise TemplateError(f"missing prompt template {name}") from exc


def split_roles(text: str) -> list[ChatMessage]:
    """Split a template on role markers into messages."""
    parts = _ROLE_MARKER.split(text)
    if parts[0].strip():
        raise TemplateError("template text before the first role marker")
    msgs = []
    for role, body in zip(parts[1::2], parts[2::2]):
        body = body.strip("\n")
        if not body.strip():
            raise TemplateError(f"empty {role} block in template")
        msgs.append(ChatMessage(role.lower(), body))
    if not msgs:
        raise TemplateError("template has no role markers")
    return msgs


def system_message() -> ChatMessage:
    msgs = split_roles(_template("system.txt"))
    if len(msgs) != 1 or msgs[0].role != "system":
        raise TemplateError("system template must hold exactly one SYSTEM block")
    content = msgs[0].content
    for marker in (FUNCTIONS_PLACEHOLDER, SCORE_FUNCTIONS_PLACEHOLDER):
        if marker not in content:
            raise TemplateError(f"system template lacks {marker}")
    content = content.replace(FUNCTIONS_PLACEHOLDER, registry_signatures())
    content = content.replace(SCORE_FUNCTIONS_PLACEHOLDER, score_function_list())
    return ChatMessage("system", content)


def in_context_examples() -> list[ChatMessage]:
    msgs = split_roles(_template("examples.txt"))
    roles = [m.role for m in msgs]
    if len(msgs) % 2 or roles != ["user", "assistant"] * (len(msgs) // 2):
        raise TemplateError("examples must alternate USER and ASSISTANT blocks")
    return msgs


def format_query(query: str, labels: Sequence[str]) -> str:
    lines = [f"[{i}] {label}" for i, label in enumerate(labels)]
    return "QUERY:\n" + query + "\n\nRELEVANT OBJECT LABELS:\n" + "\n".join(lines)


def build_messages(query: str, relevant_labels: Sequence[str]) -> list[ChatMessage]:
    if not query.strip():
        raise ValueError("query must be non-empty")
    if not relevant_labels:
        raise ValueError("relevant labels must be non-empty")
    return [system_message(), *in_context_examples(), ChatMessage("user", format_query(query, relevant_labels))]


_FENCE = re.compile(r"^\s*```[\w+-]*[ \t]*\n?(.*?)\n?```\s*$", re.S)


def extract_program(raw: str) -> str:
    m = _FENCE.match(raw)
    text = m.group(1) if m else raw
    text = text.strip("\n").strip()
    if not text:
        raise LlmError("empty program")
    return text


_audit_lock = threading.Lock()


def _audit(path: str, record: dict) -> None:
    line = json.dumps(record, sort_keys=True)
    with _audit_lock, open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def _post(cfg: LlmConfig, payload: dict) -> dict:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(cfg.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    req = urllib.request.Request(cfg.endpoint_url, json.dumps(payload).encode("utf-8"), headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=cfg.timeout) as resp:
            body = resp.read().decode("utf-8")
    except urllib.error.HTTPError as exc:
        body = exc.read().decode("utf-8", "replace")
        raise LlmError(f"endpoint returned HTTP {exc.code}: {body[:500]}", exc.code, body) from exc
    except (urllib.error.URLError, OSError) as exc:
        raise LlmError(f"network error: {exc}") from exc
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        raise LlmError("malformed response document", body=body) from exc


def generate_program(cfg: LlmConfig, query: str, labels: Sequence[str]) -> str:
    messages = build_messages(query, list(labels))
    payload = {
        "model": cfg.model_name,
        "messages": [m.to_dict() for m in messages],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
    }
    attempts = 1 + cfg.retries
    for attempt in range(attempts):
        started = time.time()
        try:
            doc = _post(cfg, payload)
            break
        except LlmError as exc:
            if cfg.audit_log:
                _audit(cfg.audit_log, {"request": payload, "error": str(exc), "status": exc.status,
                                       "started": started, "finished": time.time()})
            if attempt + 1 == attempts or (exc.status is not None and exc.status < 500):
                raise
    if cfg.audit_log:
        _audit(cfg.audit_log, {"request": payload, "response": doc, "started": started, "finished": time.time()})
    try:
        content = doc["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise LlmError("malformed response document: no choices[0].message.content") from exc
    if not isinstance(content, str) or not content.strip():
        raise LlmError("empty completion")
    return extract_program(content)
