"""Text-generation and embedding backends.

Two families live here:

* Chat backends answer prompts. ``MockChatBackend`` is a deterministic rule
  table for offline runs and tests; ``RemoteChatBackend`` speaks an
  OpenAI-compatible ``/chat/completions`` JSON protocol.
* Embedders map text to fixed-dimension vectors. ``HashEmbedder`` derives
  vectors from token hashes (deterministic across runs and platforms);
  ``RemoteEmbedder`` speaks an OpenAI-compatible ``/embeddings`` protocol.

Every backend is stateless after construction and safe for concurrent calls.
"""

from __future__ import annotations

import os
import string
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import BackendRefusal, TransportError, ZeroVectorError
from .templates import PromptTemplate, ResponseFormat


class BackendKind(Enum):
    MOCK = "mock"
    REMOTE_CHAT = "remote_chat"


@dataclass(frozen=True)
class BackendProfile:
    """Configuration for constructing a backend.

    ``endpoint`` is required exactly when ``kind`` is remote. The API key is
    never stored here; it is read from the environment variable named by
    ``api_key_env`` at request time.
    """

    kind: BackendKind = BackendKind.MOCK
    model_id: str = "mock"
    endpoint: str | None = None
    max_retries: int = 2
    timeout: float = 30.0
    temperature: float | None = None
    api_key_env: str = "MEMAUG_API_KEY"

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.kind is BackendKind.REMOTE_CHAT and not self.endpoint:
            raise ValueError("remote backends require an endpoint")
        if self.kind is BackendKind.MOCK and self.endpoint:
            raise ValueError("mock backends must not set an endpoint")


class ChatBackend(Protocol):
    """Prompt in, response text out.

    ``template`` and ``payload`` describe how the prompt was built; remote
    backends ignore them, deterministic local backends may key off them.
    """

    def complete(
        self,
        prompt: str,
        *,
        template: PromptTemplate | None = None,
        payload: str | None = None,
    ) -> str: ...


# Keyword rules applied by the mock backend, in token order. Values for the
# genre entries are the token itself.
DEFAULT_MOCK_RULES: dict[str, tuple[str, str]] = {
    "love": ("sentiment", "positive"),
    "loved": ("sentiment", "positive"),
    "enjoyed": ("sentiment", "positive"),
    "liked": ("sentiment", "positive"),
    "great": ("sentiment", "positive"),
    "amazing": ("sentiment", "positive"),
    "hated": ("sentiment", "negative"),
    "boring": ("sentiment", "negative"),
    "awful": ("sentiment", "negative"),
    "terrible": ("sentiment", "negative"),
    "thriller": ("genre", "thriller"),
    "comedy": ("genre", "comedy"),
    "drama": ("genre", "drama"),
    "horror": ("genre", "horror"),
    "romance": ("genre", "romance"),
    "documentary": ("genre", "documentary"),
    "action": ("genre", "action"),
}

_PUNCT = string.punctuation

# Sentence-leading words the person capture must not mistake for names.
_CAP_STOPWORDS = frozenset(
    "what who whom where when why how is are was were do does did the an a i my".split()
)


def _is_proper_noun(token: str) -> bool:
    return (
        len(token) >= 2
        and token.isalpha()
        and token[0].isupper()
        and token.casefold() not in _CAP_STOPWORDS
    )


class MockChatBackend:
    """Deterministic stand-in for an LLM.

    Responses are a pure function of (template id, payload): a rule table
    maps case-folded payload tokens to attribute-value pairs, capitalized
    alphabetic tokens are captured as ``(person, token)``, and the response
    is rendered in whatever format the template expects. Identical inputs
    produce identical output on every run and platform.
    """

    def __init__(
        self,
        rules: dict[str, tuple[str, str]] | None = None,
        *,
        capture_persons: bool = True,
    ):
        self.rules = dict(DEFAULT_MOCK_RULES if rules is None else rules)
        self.capture_persons = capture_persons

    def _match(self, raw: str) -> tuple[str, str] | None:
        folded = raw.casefold()
        if folded in self.rules:
            return self.rules[folded]
        stripped = raw.strip(_PUNCT)
        if stripped and stripped.casefold() in self.rules:
            return self.rules[stripped.casefold()]
        return None

    def _mine(self, text: str) -> list[tuple[str, str]]:
        pairs: list[tuple[str, str]] = []
        for raw in text.split():
            rule = self._match(raw)
            if rule is not None:
                pairs.append(rule)
                continue
            stripped = raw.strip(_PUNCT)
            if self.capture_persons and _is_proper_noun(stripped):
                pairs.append(("person", stripped))
        return pairs

    @staticmethod
    def _render_pairs(pairs: Sequence[tuple[str, str]]) -> str:
        return " ".join(f"[{name}]<{value}>" for name, value in pairs)

    def _turn_scoped(self, payload: str) -> str:
        groups = []
        for line in payload.splitlines():
            line = line.strip()
            if not line.startswith("["):
                continue
            id_close = line.find("]")
            if id_close == -1:
                continue
            dialog_id = line[1:id_close].strip()
            speaker, sep, text = line[id_close + 1 :].partition(":")
            if not sep:
                continue
            rendered = self._render_pairs(self._mine(text))
            groups.append(f"{{{speaker.strip()}:[{dialog_id}]:{rendered}}}")
        return "".join(groups)

    def _person_attributes(self, payload: str) -> str:
        persons: list[str] = []
        attributes: list[str] = []
        for raw in payload.split():
            rule = self._match(raw)
            stripped = raw.strip(_PUNCT)
            if rule is not None:
                if rule[0] not in attributes:
                    attributes.append(rule[0])
            elif _is_proper_noun(stripped) and stripped not in persons:
                persons.append(stripped)
        return f"Person:[{', '.join(persons)}]Attributes:[{', '.join(attributes)}]"

    @staticmethod
    def _ranked_list(payload: str) -> str:
        lines = [line for line in payload.splitlines() if line.lstrip().startswith("- ")]
        return "\n".join(line.strip() for line in lines)

    def complete(
        self,
        prompt: str,
        *,
        template: PromptTemplate | None = None,
        payload: str | None = None,
    ) -> str:
        if payload is None:
            payload = prompt
        expected = template.expected_format if template else ResponseFormat.PAIR_LIST
        if expected is ResponseFormat.PAIR_LIST:
            return self._render_pairs(self._mine(payload))
        if expected is ResponseFormat.TURN_SCOPED_PAIR_LIST:
            return self._turn_scoped(payload)
        if expected is ResponseFormat.PERSON_ATTRIBUTES:
            return self._person_attributes(payload)
        if expected is ResponseFormat.RANKED_LIST:
            return self._ranked_list(payload)
        return payload


class StaticChatBackend:
    """Returns canned responses in order; repeats the last one when exhausted.

    Useful in tests for failure paths (empty responses, refusals).
    """

    def __init__(self, responses: Sequence[str]):
        if not responses:
            raise ValueError("at least one response is required")
        self.responses = list(responses)
        self.calls = 0

    def complete(self, prompt, *, template=None, payload=None) -> str:
        index = min(self.calls, len(self.responses) - 1)
        self.calls += 1
        return self.responses[index]


class RemoteChatBackend:
    """OpenAI-compatible chat-completions client."""

    def __init__(self, profile: BackendProfile, session: requests.Session | None = None):
        if profile.kind is not BackendKind.REMOTE_CHAT:
            raise ValueError("RemoteChatBackend requires a remote profile")
        self.profile = profile
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.profile.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt, *, template=None, payload=None) -> str:
        body: dict = {
            "model": self.profile.model_id,
            "messages": [{"role": "user", "content": prompt}],
        }
        if self.profile.temperature is not None:
            body["temperature"] = self.profile.temperature
        url = self.profile.endpoint.rstrip("/") + "/chat/completions"
        try:
            response = self._session.post(
                url, json=body, headers=self._headers(), timeout=self.profile.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"chat request failed: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(
                f"chat request returned HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            data = response.json()
            choice = data["choices"][0]
            content = choice["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc
        if choice.get("finish_reason") == "content_filter":
            raise BackendRefusal("backend declined the prompt")
        return content


# 64-bit mixing chain used by the hash embedder. Fixed forever: golden test
# vectors are frozen against it.
_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_SM_GAMMA = 0x9E3779B97F4A7C15
_SM_MULT1 = 0xBF58476D1CE4E5B9
_SM_MULT2 = 0x94D049BB133111EB


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _token_components(token: str, dimension: int) -> np.ndarray:
    """Expand a token into ``dimension`` reals in [-1, 1).

    The token's UTF-8 bytes are hashed with 64-bit FNV-1a to seed a
    SplitMix64 stream; each 64-bit draw keeps its top 53 bits and is scaled
    into [-1, 1). Pure integer arithmetic, so results are identical on every
    platform.
    """
    state = _fnv1a64(token.encode("utf-8"))
    out = np.empty(dimension, dtype=np.float64)
    for i in range(dimension):
        state = (state + _SM_GAMMA) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * _SM_MULT1) & _MASK64
        z = ((z ^ (z >> 27)) * _SM_MULT2) & _MASK64
        z ^= z >> 31
        out[i] = ((z >> 11) / float(1 << 53)) * 2.0 - 1.0
    return out


def l2_normalize(vector: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm; raises instead of ever producing NaN."""
    norm = float(np.linalg.norm(vector))
    if norm < 1e-12:
        raise ZeroVectorError("cannot normalize a zero vector")
    return vector / norm


class Embedder(Protocol):
    @property
    def dimension(self) -> int: ...

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic token-hash embedder used as the offline mock.

    Text is case-folded and split on whitespace; each token expands through
    the fixed hash/mix chain into a vector, token vectors are averaged, and
    the mean is L2-normalized. There is no semantic signal: two texts are
    similar exactly to the extent that they share tokens.
    """

    def __init__(self, dimension: int = 8):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self._dimension = dimension
        self._cache: dict[str, np.ndarray] = {}

    @property
    def dimension(self) -> int:
        return self._dimension

    def get_params(self, deep: bool = True) -> dict:
        return {"dimension": self._dimension}

    def token_vector(self, token: str) -> np.ndarray:
        """Raw (pre-normalization) vector for one case-folded token."""
        cached = self._cache.get(token)
        if cached is None:
            cached = _token_components(token, self._dimension)
            self._cache[token] = cached
        return cached

    def embed(self, text: str) -> np.ndarray:
        tokens = text.casefold().split()
        if not tokens:
            raise ZeroVectorError("no tokens to embed")
        total = np.zeros(self._dimension, dtype=np.float64)
        for token in tokens:
            total += self.token_vector(token)
        return l2_normalize(total / len(tokens))


class RemoteEmbedder:
    """OpenAI-compatible embeddings client; dimension is backend-reported."""

    def __init__(self, profile: BackendProfile, session: requests.Session | None = None):
        if profile.kind is not BackendKind.REMOTE_CHAT:
            raise ValueError("RemoteEmbedder requires a remote profile")
        self.profile = profile
        self._session = session or requests.Session()
        self._dimension: int | None = None

    @property
    def dimension(self) -> int:
        if self._dimension is None:
            raise TransportError("dimension unknown before the first embed call")
        return self._dimension

    def embed(self, text: str) -> np.ndarray:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.profile.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = self.profile.endpoint.rstrip("/") + "/embeddings"
        try:
            response = self._session.post(
                url,
                json={"model": self.profile.model_id, "input": text},
                headers=headers,
                timeout=self.profile.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"embedding request failed: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(
                f"embedding request returned HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            values = response.json()["data"][0]["embedding"]
            vector = np.asarray(values, dtype=np.float64)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed embedding response: {exc}") from exc
        if self._dimension is None:
            self._dimension = vector.shape[0]
        return vector


def make_chat_backend(
    profile: BackendProfile,
    *,
    rules: dict[str, tuple[str, str]] | None = None,
    capture_persons: bool = True,
) -> ChatBackend:
    if profile.kind is BackendKind.MOCK:
        return MockChatBackend(rules, capture_persons=capture_persons)
    return RemoteChatBackend(profile)


def make_embedder(profile: BackendProfile, *, dimension: int = 8) -> Embedder:
    if profile.kind is BackendKind.MOCK:
        return HashEmbedder(dimension)
    return RemoteEmbedder(profile)
