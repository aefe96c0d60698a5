"""Pluggable machine-translation backends.

Every backend implements ``translate_batch(lines, direction, offset=0)`` and
returns exactly one output line per input line, in order. ``offset`` is the
0-based corpus index of ``lines[0]``; only the file backend uses it.
"""
import hashlib
import json
import logging
import os
import random
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import BackendError, ConfigError, LineError
from .text import normalize

log = logging.getLogger(__name__)

ENDPOINT_ENV = "QEFORGE_MT_ENDPOINT"
TOKEN_ENV = "QEFORGE_MT_TOKEN"


@dataclass(frozen=True)
class Direction:
    source: str = "ko"
    target: str = "en"

    @property
    def label(self):
        return f"{self.source}-{self.target}"

    def inverse(self):
        return Direction(self.target, self.source)

    @classmethod
    def parse(cls, label):
        try:
            src, tgt = label.split("-")
        except ValueError:
            raise ConfigError(f"direction must look like 'ko-en', got {label!r}") from None
        if not src or not tgt:
            raise ConfigError(f"direction must look like 'ko-en', got {label!r}")
        return cls(src, tgt)

    def __str__(self):
        return self.label


# Substitution vocabulary for the mock backend.
MOCK_VOCABULARY = (
    "the", "a", "of", "to", "and", "in", "is", "that", "it", "for", "was", "on",
    "are", "with", "as", "be", "this", "by", "at", "from", "or", "have", "an",
    "they", "which", "one", "you", "were", "all", "we", "when", "there", "can",
    "been", "has", "more", "will", "if", "no", "would", "so", "what", "about",
    "also", "into", "time", "people", "year", "way", "day", "thing", "man",
    "world", "life", "hand", "part", "case", "point", "government", "number",
)


class MockBackend:
    """Deterministic noisy "translator" for tests and dry runs.

    Output is a pure function of (seed, line, direction). Each token is
    dropped with probability ``dropout`` or replaced by a vocabulary word with
    probability ``substitute``; the surviving tokens then undergo adjacent
    swaps with probability ``swap``. All probabilities zero gives the identity.
    """

    kind = "mock"

    def __init__(self, seed=0, dropout=0.1, swap=0.05, substitute=0.1, vocabulary=MOCK_VOCABULARY):
        for name, p in (("dropout", dropout), ("swap", swap), ("substitute", substitute)):
            if not 0 <= p <= 1:
                raise ConfigError(f"mock {name} probability must be in [0, 1], got {p}")
        if dropout + substitute > 1:
            raise ConfigError("mock dropout + substitute must not exceed 1")
        self.seed = seed
        self.dropout = dropout
        self.swap = swap
        self.substitute = substitute
        self.vocabulary = tuple(vocabulary)

    def _rng(self, line, direction):
        key = f"{self.seed}\x1f{direction}\x1f{line}".encode("utf-8")
        return random.Random(int.from_bytes(hashlib.sha256(key).digest()[:8], "big"))

    def translate_line(self, line, direction):
        rng = self._rng(line, direction)
        out = []
        for tok in line.split():
            r = rng.random()
            if r < self.dropout:
                continue
            if r < self.dropout + self.substitute:
                out.append(rng.choice(self.vocabulary))
            else:
                out.append(tok)
        i = 0
        while i < len(out) - 1:
            if rng.random() < self.swap:
                out[i], out[i + 1] = out[i + 1], out[i]
                i += 2
            else:
                i += 1
        return " ".join(out)

    def translate_batch(self, lines, direction, offset=0):
        return [self.translate_line(line, str(direction)) for line in lines]


class FileBackend:
    """Precomputed translations from ``lineNo<TAB>translation`` files (1-based)."""

    kind = "file"

    def __init__(self, paths):
        # paths: {direction label or "*": tsv path}
        self.paths = dict(paths)
        self._tables = {}

    def _table(self, direction):
        label = str(direction)
        path = self.paths.get(label, self.paths.get("*"))
        if path is None:
            raise ConfigError(f"file backend has no table for direction {label}")
        if path not in self._tables:
            table = {}
            with open(path, encoding="utf-8") as fh:
                for n, raw in enumerate(fh, 1):
                    raw = raw.rstrip("\r\n")
                    if not raw:
                        continue
                    num, sep, text = raw.partition("\t")
                    if not sep or not num.strip().isdigit():
                        raise ConfigError(f"{path}:{n}: expected 'lineNo<TAB>translation'")
                    table[int(num)] = text
            self._tables[path] = table
        return self._tables[path]

    def translate_batch(self, lines, direction, offset=0):
        table = self._table(direction)
        out = []
        for k in range(len(lines)):
            line_no = offset + k + 1
            if line_no not in table:
                raise LineError("no stored translation", line_no)
            out.append(table[line_no])
        return out


class HttpBackend:
    """POSTs ``{"direction": str, "lines": [str]}`` and expects ``{"lines": [str]}``.

    Requests are split into ``batch_size`` chunks, at most ``max_in_flight``
    in flight at once; results are re-sequenced by chunk index. Timeouts,
    connection errors and 5xx responses are retried with exponential backoff.
    """

    kind = "http"

    def __init__(self, endpoint=None, token_env=TOKEN_ENV, auth_header="Authorization",
                 batch_size=32, timeout=30.0, retries=3, backoff=0.5, max_in_flight=1):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise ConfigError(f"http backend needs an endpoint (or ${ENDPOINT_ENV})")
        self.token_env = token_env
        self.auth_header = auth_header
        self.batch_size = int(batch_size)
        self.timeout = float(timeout)
        self.retries = int(retries)
        self.backoff = float(backoff)
        self.max_in_flight = max(1, int(max_in_flight))

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env) if self.token_env else None
        if token:
            value = f"Bearer {token}" if self.auth_header.lower() == "authorization" else token
            headers[self.auth_header] = value
        return headers

    def _post(self, lines, direction):
        body = json.dumps({"direction": str(direction), "lines": list(lines)},
                          ensure_ascii=False).encode("utf-8")
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            req = urllib.request.Request(self.endpoint, data=body, headers=self._headers(),
                                         method="POST")
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                if exc.code < 500:
                    raise BackendError(f"http backend: HTTP {exc.code} from {self.endpoint}") from None
                last = f"HTTP {exc.code}"
                continue
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                last = str(getattr(exc, "reason", exc))
                continue
            except ValueError:
                raise BackendError("http backend: response is not JSON") from None
            out = payload.get("lines") if isinstance(payload, dict) else None
            if not isinstance(out, list) or len(out) != len(lines):
                raise BackendError("http backend: response 'lines' missing or wrong length")
            return [str(x) for x in out]
        raise BackendError(f"http backend: giving up after {self.retries + 1} attempts ({last})")

    def translate_batch(self, lines, direction, offset=0):
        chunks = [lines[i:i + self.batch_size] for i in range(0, len(lines), self.batch_size)]
        if self.max_in_flight == 1 or len(chunks) <= 1:
            results = [self._post(c, direction) for c in chunks]
        else:
            with ThreadPoolExecutor(self.max_in_flight) as pool:
                results = list(pool.map(lambda c: self._post(c, direction), chunks))
        return [line for chunk in results for line in chunk]


def _coerce(value):
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def parse_backend_spec(spec, jobs=1):
    """Build a backend from ``kind:key=value,...``.

    ``mock:seed=42,dropout=0.1``; ``file:ko-en=mt.tsv,en-ko=bt.tsv`` (or
    ``file:path=all.tsv``); ``http:endpoint=URL,batch_size=32,timeout=30``.
    """
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"backend parameter {item!r} is not key=value")
        params[key.strip()] = value.strip()
    try:
        if kind == "mock":
            return MockBackend(**{k: _coerce(v) for k, v in params.items()})
        if kind == "file":
            paths = {("*" if k == "path" else k): v for k, v in params.items()}
            if not paths:
                raise ConfigError("file backend needs at least one table path")
            return FileBackend(paths)
        if kind == "http":
            kw = {k: _coerce(v) if k not in ("endpoint", "token_env", "auth_header") else v
                  for k, v in params.items()}
            kw.setdefault("max_in_flight", jobs)
            return HttpBackend(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad {kind} backend parameters: {exc}") from None
    raise ConfigError(f"unknown backend kind {kind!r} (expected mock, file or http)")


def _batches(items, size):
    batch = []
    for item in items:
        batch.append(item)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def translate_stream(lines, backend, direction, out_path, batch_size=64,
                     checkpoint_every=10000, resume=False):
    """Translate an iterable of lines into ``out_path``, one output per line.

    Progress is checkpointed to ``out_path + ".ckpt"`` at least every
    ``checkpoint_every`` lines and whenever a batch fails, so a rerun with
    ``resume=True`` continues after the last completed line. A batch that
    raises LineError is retried line by line; failing lines are written as
    empty and their 0-based indices returned so callers can drop them.
    """
    ckpt_path = out_path + ".ckpt"
    done, failed, offset = 0, [], 0
    if resume and os.path.exists(ckpt_path) and os.path.exists(out_path):
        with open(ckpt_path, encoding="utf-8") as fh:
            state = json.load(fh)
        done, failed, offset = state["lines"], state["failed"], state["bytes"]
        if state.get("complete"):
            return failed
        log.info("resuming %s at line %d", out_path, done)
        fh = open(out_path, "r+b")
        fh.truncate(offset)
        fh.seek(offset)
    else:
        fh = open(out_path, "wb")

    def checkpoint(complete=False):
        fh.flush()
        tmp = ckpt_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as ck:
            json.dump({"lines": done, "bytes": fh.tell(), "failed": failed,
                       "complete": complete}, ck)
        os.replace(tmp, ckpt_path)

    last_ckpt = done
    try:
        remaining = (line for k, line in enumerate(lines) if k >= done)
        for batch in _batches(remaining, batch_size):
            try:
                outs = backend.translate_batch(batch, direction, offset=done)
            except LineError:
                outs = []
                for k, line in enumerate(batch):
                    try:
                        outs.extend(backend.translate_batch([line], direction, offset=done + k))
                    except LineError as exc:
                        log.warning("translation failed (%s); dropping line", exc)
                        failed.append(done + k)
                        outs.append("")
            except BackendError:
                checkpoint()
                raise
            if len(outs) != len(batch):
                checkpoint()
                raise BackendError(f"backend returned {len(outs)} lines for a batch of {len(batch)}")
            for out in outs:
                fh.write((normalize(out) + "\n").encode("utf-8"))
            done += len(batch)
            if done - last_ckpt >= checkpoint_every:
                checkpoint()
                last_ckpt = done
        checkpoint(complete=True)
    finally:
        fh.close()
    return failed
