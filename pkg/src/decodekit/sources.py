"""Providers of next-token log-probabilities.

Three interchangeable sources implement :meth:`LogitSource.next_token_logits`:

* :class:`ToyLM` -- a table-driven n-gram model loaded from JSON, exposing the
  full vocabulary. Used for tests and desk-scale tree sampling.
* :class:`ReplaySource` -- answers from a :class:`FixtureStore` of recorded
  top-K lists, keyed by the SHA-256 of the exact prompt bytes.
* :class:`RemoteSource` -- an OpenAI-compatible ``/completions`` endpoint asked
  for ``max_tokens=1`` with ``logprobs=K`` at temperature 0.

Text-based sources see a token sequence as the concatenation of its tokens.
"""

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from .distributions import LogitVector, TokenDistribution
from .exceptions import (
    FixtureConflictError,
    InvalidInputError,
    MalformedResponseError,
    MissingFixtureError,
    RemoteHTTPError,
    RemoteTimeoutError,
    UnknownTokenError,
)

logger = logging.getLogger(__name__)

CONTEXT_SEPARATOR = "|"
BACKOFF_ROW = "*"


def prompt_hash(prompt):
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class LogitSource:
    """Contract shared by all sources.

    ``max_candidates`` is the number of entries a call returns (``None`` when
    unbounded) and ``full_vocabulary`` tells whether those entries cover the
    whole support, which the tree sampler needs for exact mass accounting.
    """

    max_candidates = None
    full_vocabulary = False

    def next_token_logits(self, tokens):
        raise NotImplementedError

    @staticmethod
    def _check_tokens(tokens):
        tokens = list(tokens)
        if not tokens:
            raise InvalidInputError("token sequence must be non-empty")
        return tokens


class ToyLM(LogitSource):
    """Deterministic n-gram table.

    ``rows`` maps a context key (the last ``order - 1`` tokens joined with
    ``"|"``) to one logit per vocabulary entry. A ``"*"`` row, if present, is
    used for contexts without their own row.
    """

    full_vocabulary = True

    def __init__(self, vocab, order, stop, rows):
        self.vocab = tuple(vocab)
        if len(set(self.vocab)) != len(self.vocab):
            raise InvalidInputError("toy LM vocabulary has duplicates")
        self.order = int(order)
        if self.order < 1:
            raise InvalidInputError("n-gram order must be >= 1")
        if stop not in self.vocab:
            raise InvalidInputError(f"stop token {stop!r} is not in the vocabulary")
        self.stop = stop
        self._index = set(self.vocab)
        self.rows = {}
        for key, logits in rows.items():
            if len(logits) != len(self.vocab):
                raise InvalidInputError(
                    f"row {key!r} has {len(logits)} logits for a vocabulary of {len(self.vocab)}"
                )
            self.rows[key] = LogitVector(self.vocab, tuple(logits))
        self.max_candidates = len(self.vocab)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["vocab"], data["order"], data["stop"], data["rows"])
        except KeyError as exc:
            raise InvalidInputError(f"toy LM table is missing field {exc.args[0]!r}")

    def to_dict(self):
        return {
            "vocab": list(self.vocab),
            "order": self.order,
            "stop": self.stop,
            "rows": {k: list(v.logits) for k, v in self.rows.items()},
        }

    def context_key(self, tokens):
        if self.order == 1:
            return ""
        return CONTEXT_SEPARATOR.join(tokens[-(self.order - 1):])

    def next_token_logits(self, tokens):
        tokens = self._check_tokens(tokens)
        for tok in tokens:
            if tok not in self._index:
                raise UnknownTokenError(f"token {tok!r} is not in the toy LM vocabulary")
        key = self.context_key(tokens)
        row = self.rows.get(key)
        if row is None:
            row = self.rows.get(BACKOFF_ROW)
        if row is None:
            raise UnknownTokenError(f"no row for context {key!r}")
        return row

    def encode(self, text):
        """Split ``text`` into vocabulary tokens by greedy longest match."""
        by_length = sorted(self.vocab, key=len, reverse=True)
        out, pos = [], 0
        while pos < len(text):
            for tok in by_length:
                if tok and text.startswith(tok, pos):
                    out.append(tok)
                    pos += len(tok)
                    break
            else:
                raise UnknownTokenError(f"cannot tokenize {text[pos:pos + 20]!r} with the toy vocabulary")
        return out


class FixtureStore:
    """Recorded top-K candidate lists keyed by prompt hash.

    Backed by a JSON-lines file when ``path`` is given; new records are
    appended as they arrive. Safe to share between threads.
    """

    def __init__(self, path=None, min_candidates=5):
        self.path = Path(path) if path is not None else None
        self.min_candidates = min_candidates
        self._entries = {}
        self._prompts = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load(self.path)

    def _load(self, path):
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    candidates = _as_candidates(rec["candidates"])
                    digest = rec["hash"]
                    prompt = rec.get("prompt")
                except (ValueError, KeyError, TypeError) as exc:
                    raise InvalidInputError(f"{path}:{lineno}: bad fixture record ({exc})")
                if prompt is not None and prompt_hash(prompt) != digest:
                    raise InvalidInputError(f"{path}:{lineno}: hash does not match prompt")
                self._check(candidates)
                existing = self._entries.get(digest)
                if existing is not None and existing != candidates:
                    raise FixtureConflictError(f"{path}:{lineno}: conflicting record for {digest}")
                self._entries[digest] = candidates
                self._prompts[digest] = prompt

    def _check(self, candidates):
        if len(candidates) < self.min_candidates:
            raise InvalidInputError(
                f"fixture has {len(candidates)} candidates, at least {self.min_candidates} required"
            )
        if any(lp > 0 for _, lp in candidates):
            raise InvalidInputError("fixture log-probabilities must be <= 0")

    def __len__(self):
        return len(self._entries)

    def __contains__(self, prompt):
        return prompt_hash(prompt) in self._entries

    def get(self, prompt):
        digest = prompt_hash(prompt)
        try:
            return list(self._entries[digest])
        except KeyError:
            raise MissingFixtureError(digest, prompt)

    def record(self, prompt, candidates):
        candidates = _as_candidates(candidates)
        self._check(candidates)
        digest = prompt_hash(prompt)
        with self._lock:
            existing = self._entries.get(digest)
            if existing is not None:
                if existing != candidates:
                    raise FixtureConflictError(f"a different result is already recorded for {digest}")
                return False
            self._entries[digest] = candidates
            self._prompts[digest] = prompt
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(_fixture_line(digest, prompt, candidates))
        return True

    def save(self, path):
        """Write every entry to ``path``, sorted by hash."""
        with open(path, "w", encoding="utf-8") as fh:
            for digest in sorted(self._entries):
                fh.write(_fixture_line(digest, self._prompts.get(digest), self._entries[digest]))


def _as_candidates(candidates):
    if isinstance(candidates, TokenDistribution):
        return [(t, float(lp)) for t, lp in candidates]
    if isinstance(candidates, dict):
        candidates = candidates.items()
    return [(str(t), float(lp)) for t, lp in candidates]


def _fixture_line(digest, prompt, candidates):
    rec = {"hash": digest, "prompt": prompt, "candidates": [[t, lp] for t, lp in candidates]}
    return json.dumps(rec, ensure_ascii=False) + "\n"


def record_fixture(store, prompt, result):
    """Add ``result`` for ``prompt`` to ``store``; a no-op if already identical."""
    store.record(prompt, result)
    return store


class ReplaySource(LogitSource):
    def __init__(self, store):
        self.store = store

    def next_token_logits(self, tokens):
        prompt = "".join(self._check_tokens(tokens))
        return LogitVector.from_pairs(self.store.get(prompt))

    def distribution(self, prompt):
        return TokenDistribution.from_logprobs(self.store.get(prompt), complete=False)


class RecordingSource(LogitSource):
    """Wrap a text source and record every answer into a fixture store."""

    def __init__(self, inner, store):
        self.inner = inner
        self.store = store
        self.max_candidates = inner.max_candidates
        self.full_vocabulary = inner.full_vocabulary

    def next_token_logits(self, tokens):
        tokens = self._check_tokens(tokens)
        logits = self.inner.next_token_logits(tokens)
        self.store.record("".join(tokens), zip(logits.tokens, logits.logits))
        return logits


@dataclass
class EndpointConfig:
    url: str
    model: str = ""
    k: int = 5
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.5
    max_in_flight: int = 4
    api_key_env: str = "OPENAI_API_KEY"

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError("K must be >= 1")
        if self.retries < 0:
            raise InvalidInputError("retries must be >= 0")
        if not self.timeout or self.timeout <= 0:
            raise InvalidInputError("timeout must be positive")


def _request_body(config, prompt):
    return {
        "model": config.model,
        "prompt": prompt,
        "max_tokens": 1,
        "logprobs": config.k,
        "temperature": 0,
        "echo": False,
    }


def _parse_top_logprobs(payload, raw):
    try:
        top = payload["choices"][0]["logprobs"]["top_logprobs"][0]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponseError("response has no choices[0].logprobs.top_logprobs[0]", payload=raw)
    if isinstance(top, list):
        # some servers send [{"token": ..., "logprob": ...}, ...]
        try:
            top = {d["token"]: d["logprob"] for d in top}
        except (KeyError, TypeError):
            raise MalformedResponseError("unrecognized top_logprobs entry layout", payload=raw)
    if not isinstance(top, dict) or not top:
        raise MalformedResponseError("top_logprobs[0] is empty or not a mapping", payload=raw)
    try:
        return [(str(t), float(lp)) for t, lp in top.items()]
    except (TypeError, ValueError):
        raise MalformedResponseError("non-numeric log-probability in response", payload=raw)


def fetch_remote_logprobs(config, prompt, k=None, client=None, sleep=time.sleep):
    """Top-K next-token log-probabilities for ``prompt`` from a completions endpoint.

    Transient failures (timeouts, connection errors, 429 and 5xx responses) are
    retried with exponential backoff, at most ``config.retries`` extra attempts.
    Returns an incomplete :class:`TokenDistribution`.
    """
    if k is not None and k != config.k:
        config = EndpointConfig(**{**config.__dict__, "k": k})
    headers = {}
    api_key = os.environ.get(config.api_key_env)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    owns_client = client is None
    if owns_client:
        client = httpx.Client(timeout=config.timeout)
    body = _request_body(config, prompt)
    attempts = 0
    try:
        while True:
            attempts += 1
            last = attempts > config.retries
            try:
                resp = client.post(config.url, json=body, headers=headers, timeout=config.timeout)
            except httpx.TimeoutException as exc:
                if last:
                    raise RemoteTimeoutError(f"request timed out after {attempts} attempts: {exc}",
                                             attempts=attempts)
            except httpx.TransportError as exc:
                if last:
                    raise RemoteHTTPError(f"transport failure after {attempts} attempts: {exc}",
                                          attempts=attempts)
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    if last:
                        raise RemoteHTTPError(f"HTTP {resp.status_code} after {attempts} attempts",
                                              payload=resp.text, status=resp.status_code,
                                              attempts=attempts)
                elif resp.status_code >= 400:
                    raise RemoteHTTPError(f"HTTP {resp.status_code}", payload=resp.text,
                                          status=resp.status_code, attempts=attempts)
                else:
                    try:
                        payload = resp.json()
                    except ValueError:
                        raise MalformedResponseError("response body is not JSON", payload=resp.text,
                                                     attempts=attempts)
                    pairs = _parse_top_logprobs(payload, resp.text)
                    logger.debug("fetched %d candidates in %d attempt(s)", len(pairs), attempts)
                    return TokenDistribution.from_logprobs(pairs, complete=False)
            delay = config.backoff * 2 ** (attempts - 1)
            logger.info("transient failure, retrying in %.2fs (attempt %d)", delay, attempts)
            sleep(delay)
    finally:
        if owns_client:
            client.close()


class RemoteSource(LogitSource):
    """OpenAI-compatible completions endpoint with a bound on in-flight requests."""

    def __init__(self, config, client=None, sleep=time.sleep):
        self.config = config
        self.max_candidates = config.k
        self._client = client or httpx.Client(timeout=config.timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def distribution(self, prompt):
        with self._slots:
            return fetch_remote_logprobs(self.config, prompt, client=self._client, sleep=self._sleep)

    def next_token_logits(self, tokens):
        dist = self.distribution("".join(self._check_tokens(tokens)))
        return LogitVector(dist.tokens, dist.logprobs)

    def close(self):
        self._client.close()
