"""LLM access: providers, record/replay cache, and response parsers.

Three interchangeable providers sit behind one gateway:

- remote: OpenAI-compatible chat-completions JSON over HTTPS, with bounded
  retries and exponential backoff. Auth failures are never retried.
- mock: a pure function of the request text implementing fixed rule tables
  (documented in the README) so the whole pipeline runs offline and
  deterministically.
- replay: answers only from a previously recorded cache; a miss is an error
  because replay mode forbids network access.

Responses are parsed from a fenced block contract that is uniform across
prompt configurations; numbered plain-text lines are accepted as fallback.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass

import requests

from .errors import (
    AuthError,
    ContextOverflow,
    MissingSteps,
    ProviderUnavailable,
    ReplayMiss,
    UnknownLabel,
    UnparseableResponse,
)
from .prompts import RenderedPrompt

logger = logging.getLogger(__name__)

API_KEY_ENV = "PROCESSLENS_API_KEY"
BASE_URL_ENV = "PROCESSLENS_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"

# patchable in tests to avoid real waiting
_sleep = time.sleep
_BACKOFF_BASE_SECONDS = 0.5


@dataclass
class ProviderConfig:
    model_name: str = "gpt-3.5-turbo-0125"
    base_url: str = ""
    temperature: float = 0.1
    max_context_tokens: int = 4096
    api_key_env: str = API_KEY_ENV
    max_retries: int = 3
    request_timeout: float = 60.0
    max_in_flight: int = 4


@dataclass(frozen=True)
class ChatExchange:
    model_name: str
    temperature: float
    system_text: str
    user_text: str
    response_text: str
    latency_ms: float
    provider_label: str
    cached: bool = False


def estimate_tokens(text: str) -> int:
    """Cheap length-based token estimate (four characters per token)."""
    return math.ceil(len(text) / 4)


def cache_key(model_name: str, temperature: float, system_text: str, user_text: str) -> str:
    """Stable digest identifying one request for the record/replay cache."""
    canonical = json.dumps(
        {
            "model": model_name,
            "temperature": temperature,
            "system": system_text,
            "user": user_text,
        },
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per exchange, named by its request digest."""

    def __init__(self, directory):
        from pathlib import Path

        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _path(self, key: str):
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.exists():
            self.misses += 1
            return None
        with open(path, "r", encoding="utf-8") as fh:
            entry = json.load(fh)
        self.hits += 1
        return entry

    def put(self, key: str, entry: dict) -> None:
        path = self._path(key)
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


class RemoteHttpProvider:
    """OpenAI-compatible chat-completions client with retry and backoff."""

    def __init__(self, config: ProviderConfig):
        self.config = config
        self.base_url = (config.base_url or os.environ.get(BASE_URL_ENV, DEFAULT_BASE_URL)).rstrip("/")
        api_key = os.environ.get(config.api_key_env, "")
        if not api_key:
            raise AuthError(f"environment variable {config.api_key_env} is not set")
        self._headers = {
            "Authorization": f"Bearer {api_key}",
            "Content-Type": "application/json",
        }

    def complete(self, system_text: str, user_text: str) -> str:
        messages = []
        if system_text:
            messages.append({"role": "system", "content": system_text})
        messages.append({"role": "user", "content": user_text})
        payload = {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": messages,
        }
        url = f"{self.base_url}/chat/completions"
        last_error: str = "no attempt made"
        for attempt in range(self.config.max_retries):
            if attempt:
                _sleep(_BACKOFF_BASE_SECONDS * (2 ** (attempt - 1)))
            try:
                resp = requests.post(
                    url, json=payload, headers=self._headers, timeout=self.config.request_timeout
                )
            except requests.RequestException as exc:
                last_error = f"connection error: {exc}"
                logger.warning("attempt %d failed: %s", attempt + 1, last_error)
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"provider rejected credentials (HTTP {resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("attempt %d failed: %s", attempt + 1, last_error)
                continue
            if resp.status_code != 200:
                raise ProviderUnavailable(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError) as exc:
                raise ProviderUnavailable(f"malformed provider response: {exc}") from exc
        raise ProviderUnavailable(
            f"provider still failing after {self.config.max_retries} attempts ({last_error})"
        )


# Fixed mock rule tables. NVA keywords take precedence over BVA keywords.
MOCK_BVA_KEYWORDS = ("check", "verify", "record", "approve", "log", "archive", "compliance")
MOCK_NVA_KEYWORDS = ("wait", "handover", "re-enter", "duplicate", "forward internally", "file paperwork")

_NAME_SPLIT_RE = re.compile(r";\s+|\s+and\s+|\s+then\s+")

# Small fixed stopword list used by the mock judge; token comparisons run on
# the remaining content words so articles and prepositions never decide a
# category.
_JUDGE_STOPWORDS = frozenset(
    {"a", "an", "the", "of", "to", "for", "and", "or", "in", "on", "at", "by",
     "with", "from", "then", "into", "is", "are", "be"}
)


def mock_breakdown_steps(activity_name: str) -> list[str]:
    """Deterministic step list for an activity name.

    The name is split on "; ", " and ", " then "; single-fragment names fall
    back to a three-step receive/perform/record template.
    """
    parts = [p.strip() for p in _NAME_SPLIT_RE.split(activity_name) if p.strip()]
    if len(parts) > 1:
        return [p[0].upper() + p[1:] for p in parts]
    return [
        f"Receive input for {activity_name}",
        f"Perform {activity_name}",
        f"Record outcome of {activity_name}",
    ]


def mock_classify_step(text: str) -> tuple[str, str]:
    """Deterministic (label, justification) for one step text."""
    low = text.lower()
    for kw in MOCK_NVA_KEYWORDS:
        if kw in low:
            return "NVA", f"Contains '{kw}', a waste signal; neither customer nor business benefits."
    for kw in MOCK_BVA_KEYWORDS:
        if kw in low:
            return "BVA", f"Contains '{kw}', an internal control or record keeping duty."
    return "VA", "No control or waste signals; the step advances the case directly."


def _content_tokens(text: str) -> frozenset[str]:
    words = re.findall(r"[a-z0-9]+", text.lower())
    content = [w for w in words if w not in _JUDGE_STOPWORDS]
    return frozenset(content or words)


def mock_judge_step(generated: str, gold_texts: list[str], consumed: set[int]) -> tuple[str, list[int], str]:
    """Deterministic alignment category for one generated step.

    Returns (category, matched gold indices, rationale). Functional
    equivalence requires token overlap of at least 0.8 of the shorter text
    against a not-yet-consumed gold step and consumes it; strict token
    containment either way with coverage of at least half the longer text is
    a granularity difference and may reuse gold steps (many-to-one).
    """
    g = _content_tokens(generated)
    best_fe: tuple[float, int] | None = None
    gran: list[int] = []
    for idx, gold in enumerate(gold_texts):
        t = _content_tokens(gold)
        inter = len(g & t)
        if not inter:
            continue
        shorter = min(len(g), len(t))
        longer = max(len(g), len(t))
        if (g < t or t < g) and inter / longer >= 0.5:
            gran.append(idx)
            continue
        if idx not in consumed and inter / shorter >= 0.8 and not (g < t or t < g):
            score = inter / shorter
            if best_fe is None or score > best_fe[0]:
                best_fe = (score, idx)
    if best_fe is not None:
        consumed.add(best_fe[1])
        return (
            "FunctionalEquivalence",
            [best_fe[1]],
            f"token overlap {best_fe[0]:.2f} of the shorter text",
        )
    if gran:
        return ("GranularityDifference", gran, "token containment with coverage >= 0.5")
    return ("NoMatch", [], "no sufficient token overlap")


class MockProvider:
    """Pure-function provider; recognizes the three payload kinds by the
    fence tag the format instructions demand."""

    def complete(self, system_text: str, user_text: str) -> str:
        if "tagged `steps`" in user_text:
            return self._breakdown(user_text)
        if "tagged `vaa`" in user_text:
            return self._vaa(user_text)
        if "tagged `alignment`" in user_text:
            return self._judge(user_text)
        return "```text\nok\n```"

    @staticmethod
    def _breakdown(user_text: str) -> str:
        matches = re.findall(r"^Activity:\s*(.+)$", user_text, flags=re.M)
        name = matches[-1].strip() if matches else "the activity"
        steps = mock_breakdown_steps(name)
        lines = "\n".join(f"{i}. {s}" for i, s in enumerate(steps, 1))
        return f"```steps\n{lines}\n```"

    @staticmethod
    def _numbered_items(block: str) -> list[str]:
        items: list[str] = []
        for line in block.splitlines():
            m = re.match(r"\s*\d+\.\s+(.*\S)\s*$", line)
            if m:
                items.append(m.group(1))
            elif items and not line.strip():
                break
        return items

    def _vaa(self, user_text: str) -> str:
        tail = user_text.rsplit("Steps to classify:\n", 1)[-1]
        steps = self._numbered_items(tail)
        lines = []
        for i, step in enumerate(steps, 1):
            label, justification = mock_classify_step(step)
            lines.append(f"{i}. {label} | {justification}")
        return "```vaa\n" + "\n".join(lines) + "\n```"

    @staticmethod
    def _judge(user_text: str) -> str:
        gen_block = user_text.rsplit("Generated steps:\n", 1)[-1]
        gen_block, _, gold_block = gen_block.partition("Reference steps:\n")
        gen = re.findall(r"^G(\d+)\.\s+(.*\S)\s*$", gen_block, flags=re.M)
        gold = re.findall(r"^T(\d+)\.\s+(.*\S)\s*$", gold_block, flags=re.M)
        gold_texts = [text for _, text in gold]
        gold_ids = [f"T{num}" for num, _ in gold]
        # Ids named on an "Already matched:" line were claimed by an exact
        # pre-pass upstream; they stay available to granularity matches only.
        consumed: set[int] = set()
        claimed = re.search(r"^Already matched:\s*(.+)$", gold_block, flags=re.M)
        if claimed:
            for num in re.findall(r"T(\d+)", claimed.group(1)):
                tid = f"T{num}"
                if tid in gold_ids:
                    consumed.add(gold_ids.index(tid))
        lines = []
        for num, text in gen:
            category, matched, rationale = mock_judge_step(text, gold_texts, consumed)
            ids = ",".join(gold_ids[i] for i in matched) if matched else "-"
            lines.append(f"G{num} | {category} | {ids} | {rationale}")
        return "```alignment\n" + "\n".join(lines) + "\n```"


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------


class LlmGateway:
    """Provider plus cache plus admission control.

    ``mode`` is one of "off", "record", "replay". Record and replay both
    serve cache hits; replay raises ReplayMiss instead of calling out.
    """

    def __init__(
        self,
        provider,
        config: ProviderConfig,
        *,
        cache: ResponseCache | None = None,
        mode: str = "off",
        label: str = "",
    ):
        if mode not in ("off", "record", "replay"):
            raise ValueError(f"unknown gateway mode {mode!r}")
        if mode in ("record", "replay") and cache is None:
            raise ValueError(f"mode {mode!r} requires a cache")
        self.provider = provider
        self.config = config
        self.cache = cache
        self.mode = mode
        self.label = label
        self._sem = threading.Semaphore(max(1, config.max_in_flight))

    def complete(self, prompt: RenderedPrompt) -> ChatExchange:
        estimated = estimate_tokens(prompt.system_text) + estimate_tokens(prompt.user_text)
        if estimated > self.config.max_context_tokens:
            raise ContextOverflow(
                f"estimated {estimated} tokens exceeds the {self.config.max_context_tokens}-token window"
            )
        key = cache_key(
            self.config.model_name, self.config.temperature, prompt.system_text, prompt.user_text
        )
        if self.cache is not None and self.mode in ("record", "replay"):
            entry = self.cache.get(key)
            if entry is not None:
                return ChatExchange(
                    model_name=entry["model_name"],
                    temperature=entry["temperature"],
                    system_text=prompt.system_text,
                    user_text=prompt.user_text,
                    response_text=entry["response_text"],
                    latency_ms=entry.get("latency_ms", 0.0),
                    provider_label=entry.get("provider_label", self.label),
                    cached=True,
                )
        if self.mode == "replay":
            raise ReplayMiss(f"no recorded response for request {key[:12]}...")
        with self._sem:
            start = time.monotonic()
            response_text = self.provider.complete(prompt.system_text, prompt.user_text)
            latency_ms = (time.monotonic() - start) * 1000.0
        if isinstance(self.provider, MockProvider):
            latency_ms = 0.0  # keep recorded mock exchanges byte-stable
        exchange = ChatExchange(
            model_name=self.config.model_name,
            temperature=self.config.temperature,
            system_text=prompt.system_text,
            user_text=prompt.user_text,
            response_text=response_text,
            latency_ms=latency_ms,
            provider_label=self.label,
            cached=False,
        )
        if self.cache is not None and self.mode == "record":
            self.cache.put(
                key,
                {
                    "key": key,
                    "model_name": exchange.model_name,
                    "temperature": exchange.temperature,
                    "system_text": exchange.system_text,
                    "user_text": exchange.user_text,
                    "response_text": exchange.response_text,
                    "latency_ms": exchange.latency_ms,
                    "provider_label": exchange.provider_label,
                },
            )
        return exchange


def build_gateway(
    kind: str,
    *,
    config: ProviderConfig | None = None,
    cache_dir=None,
) -> LlmGateway:
    """Construct a gateway for one of the CLI provider kinds."""
    config = config or ProviderConfig()
    cache = ResponseCache(cache_dir) if cache_dir is not None else None
    if kind == "mock":
        mode = "record" if cache else "off"
        return LlmGateway(MockProvider(), config, cache=cache, mode=mode, label="mock")
    if kind == "remote":
        mode = "record" if cache else "off"
        return LlmGateway(
            RemoteHttpProvider(config),
            config,
            cache=cache,
            mode=mode,
            label=f"remote:{config.model_name}",
        )
    if kind == "replay":
        if cache is None:
            raise ValueError("replay provider requires a cache directory")
        return LlmGateway(None, config, cache=cache, mode="replay", label="replay")
    raise ValueError(f"unknown provider kind {kind!r}")


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------

_FENCE_RE = {
    "steps": re.compile(r"```steps\s*\n(.*?)```", re.S),
    "vaa": re.compile(r"```vaa\s*\n(.*?)```", re.S),
    "any": re.compile(r"```[a-zA-Z]*\s*\n(.*?)```", re.S),
}

_ITEM_PREFIX_RE = re.compile(r"^\s*(?:\d+[.)]\s+|[-*•]\s+)(.*\S)\s*$")

_LABEL_PATTERNS: list[tuple[re.Pattern, str]] = [
    (re.compile(r"^\[?\s*(?:business[\s-]+value[\s-]+adding|bva)\b\]?\.?", re.I), "BVA"),
    (re.compile(r"^\[?\s*(?:non[\s-]+value[\s-]+adding|nva)\b\]?\.?", re.I), "NVA"),
    (re.compile(r"^\[?\s*(?:value[\s-]+adding|va)\b\]?\.?", re.I), "VA"),
]


def parse_step_list(response_text: str) -> list[str]:
    """Step texts from a breakdown response.

    The fenced ```steps block is authoritative when present; otherwise any
    fenced block, then the whole text, is scanned for numbered or bulleted
    lines. Numbering and bullets are stripped, empty items dropped.
    """
    for pattern in (_FENCE_RE["steps"], _FENCE_RE["any"]):
        m = pattern.search(response_text)
        if m:
            items = _scan_items(m.group(1))
            if items:
                return items
    items = _scan_items(response_text)
    if items:
        return items
    raise UnparseableResponse("no step list found in response")


def _scan_items(block: str) -> list[str]:
    items = []
    for line in block.splitlines():
        m = _ITEM_PREFIX_RE.match(line)
        if m:
            items.append(m.group(1))
    return items


def _parse_label(text: str) -> tuple[str, str]:
    """(normalized label, leftover text) or UnknownLabel."""
    stripped = text.strip()
    for pattern, label in _LABEL_PATTERNS:
        m = pattern.match(stripped)
        if m:
            rest = stripped[m.end():].lstrip(" \t:--")
            return label, rest.strip()
    raise UnknownLabel(f"unrecognized label in {text!r}")


def parse_classifications(
    response_text: str, expected_step_count: int
) -> list[tuple[str, str]]:
    """(label, justification) per step ordinal, 1..expected_step_count.

    Accepts "N. LABEL | justification" lines inside the ```vaa fence (or, as
    fallback, anywhere in the text). Labels are normalized case-insensitively
    from the spelled-out forms. Missing ordinals raise MissingSteps;
    duplicates or ordinals outside range raise UnparseableResponse.
    """
    m = _FENCE_RE["vaa"].search(response_text)
    block = m.group(1) if m else response_text
    found: dict[int, tuple[str, str]] = {}
    for line in block.splitlines():
        lm = re.match(r"\s*(\d+)[.)]\s+(.*\S)\s*$", line)
        if not lm:
            continue
        ordinal = int(lm.group(1))
        rest = lm.group(2)
        if "|" in rest:
            label_part, _, justification = rest.partition("|")
            label, leftover = _parse_label(label_part)
            if leftover:
                raise UnknownLabel(f"unrecognized label in {label_part!r}")
            justification = justification.strip()
        else:
            label, justification = _parse_label(rest)
        if ordinal in found:
            raise UnparseableResponse(f"ordinal {ordinal} appears twice")
        if not 1 <= ordinal <= expected_step_count:
            raise UnparseableResponse(
                f"ordinal {ordinal} outside 1..{expected_step_count}"
            )
        found[ordinal] = (label, justification)
    if not found:
        raise UnparseableResponse("no classification lines found in response")
    missing = [i for i in range(1, expected_step_count + 1) if i not in found]
    if missing:
        raise MissingSteps(missing)
    return [found[i] for i in range(1, expected_step_count + 1)]
