"""Catalog and impression-log ingestion.

Reads the two tab-separated files used by news click datasets: a news
catalog (``news.tsv``: id, category, subcategory, title, abstract and
optional JSON entity columns) and a behaviors log (``behaviors.tsv``:
impression id, user id, timestamp, space-separated click history,
space-separated ``<news_id>-<label>`` candidates).  A JSONL interchange
format for impression records is accepted by the behaviors parser so
other log formats can be converted externally.

Parsed catalogs and logs are plain immutable-by-convention containers and
are safe to share across threads once built.
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"

# MIND-style timestamp, e.g. "11/11/2019 9:05:58 AM"; interpreted as UTC.
_TIME_FORMAT = "%m/%d/%Y %I:%M:%S %p"

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


class CorpusError(Exception):
    """Unrecoverable problem with an input file (duplicate ids, bad vectors)."""


@dataclass
class ParseIssue:
    line_no: int
    message: str

    def __str__(self):
        return f"line {self.line_no}: {self.message}"


class Vocabulary:
    """Token interning with reserved padding and unknown-word slots.

    Index 0 is always the padding token and index 1 the unknown token;
    ``token_to_index`` and ``index_to_token`` stay exact inverses.
    """

    pad_index = 0
    unk_index = 1

    def __init__(self):
        self.token_to_index = {PAD_TOKEN: 0, UNK_TOKEN: 1}
        self.index_to_token = [PAD_TOKEN, UNK_TOKEN]

    def __len__(self):
        return len(self.index_to_token)

    def __contains__(self, token):
        return token in self.token_to_index

    def add(self, token: str) -> int:
        idx = self.token_to_index.get(token)
        if idx is None:
            idx = len(self.index_to_token)
            self.token_to_index[token] = idx
            self.index_to_token.append(token)
        return idx

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, self.unk_index)


class Interner:
    """Dense id assignment for opaque keys (categories, entities)."""

    def __init__(self):
        self.key_to_index = {}
        self.index_to_key = []

    def __len__(self):
        return len(self.index_to_key)

    def intern(self, key: str) -> int:
        idx = self.key_to_index.get(key)
        if idx is None:
            idx = len(self.index_to_key)
            self.key_to_index[key] = idx
            self.index_to_key.append(key)
        return idx

    def get(self, key: str):
        return self.key_to_index.get(key)


@dataclass
class NewsArticle:
    news_id: str
    category_id: int
    subcategory_id: int
    title_tokens: list[int]
    entity_ids: list[int] = field(default_factory=list)
    publish_time: int | None = None


@dataclass
class ImpressionRecord:
    impression_id: str
    user_id: str
    time: int
    history: list[str]
    shown: list[tuple[str, int]]


@dataclass
class NewsCatalog:
    """Articles keyed by id plus the interners built while parsing them."""

    articles: dict[str, NewsArticle]
    categories: Interner
    subcategories: Interner
    entities: Interner
    issues: list[ParseIssue] = field(default_factory=list)

    def __len__(self):
        return len(self.articles)

    def __contains__(self, news_id):
        return news_id in self.articles

    def get(self, news_id):
        return self.articles.get(news_id)


@dataclass
class ImpressionLog:
    """Impression records sorted ascending by time."""

    records: list[ImpressionRecord]
    issues: list[ParseIssue] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, drop punctuation characters, split on whitespace."""
    cleaned = text.lower().translate(_PUNCT_TABLE)
    return cleaned.split()


def tokenize_title(text: str, vocab: Vocabulary, max_title_len: int) -> list[int]:
    """Map a raw title to a fixed-length index sequence.

    Out-of-vocabulary tokens map to the unknown index; the result is
    truncated or right-padded with the padding index to ``max_title_len``.
    """
    ids = [vocab.index(tok) for tok in normalize_tokens(text)]
    ids = ids[:max_title_len]
    ids.extend([vocab.pad_index] * (max_title_len - len(ids)))
    return ids


def _extract_entity_keys(extra_columns):
    # Trailing catalog columns may hold JSON arrays of entity annotations;
    # anything else (URLs etc.) is ignored.
    keys = []
    for col in extra_columns:
        col = col.strip()
        if not col.startswith("["):
            continue
        try:
            parsed = json.loads(col)
        except json.JSONDecodeError:
            continue
        if not isinstance(parsed, list):
            continue
        for item in parsed:
            if isinstance(item, dict) and "WikidataId" in item:
                keys.append(str(item["WikidataId"]))
    # Dedupe preserving first-seen order.
    seen = set()
    out = []
    for k in keys:
        if k not in seen:
            seen.add(k)
            out.append(k)
    return out


def parse_news_file(path, max_title_len: int = 30,
                    vocab: Vocabulary | None = None) -> tuple[NewsCatalog, Vocabulary]:
    """Parse a news catalog TSV and build the title vocabulary.

    Rows need at least five columns (id, category, subcategory, title,
    abstract).  Malformed rows are skipped and recorded on the returned
    catalog; a duplicated news id aborts parsing.  Passing an existing
    ``vocab`` reuses it instead of growing a new one (unseen title words
    then map to the unknown index).
    """
    grow_vocab = vocab is None
    if vocab is None:
        vocab = Vocabulary()
    catalog = NewsCatalog({}, Interner(), Interner(), Interner())

    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 5:
                catalog.issues.append(ParseIssue(line_no, f"expected >=5 columns, got {len(cols)}"))
                continue
            news_id = cols[0]
            if news_id in catalog.articles:
                raise CorpusError(f"duplicate news id {news_id!r} at line {line_no}")
            if grow_vocab:
                for tok in normalize_tokens(cols[3]):
                    vocab.add(tok)
            catalog.articles[news_id] = NewsArticle(
                news_id=news_id,
                category_id=catalog.categories.intern(cols[1]),
                subcategory_id=catalog.subcategories.intern(cols[2]),
                title_tokens=tokenize_title(cols[3], vocab, max_title_len),
                entity_ids=[catalog.entities.intern(k) for k in _extract_entity_keys(cols[5:])],
            )
    return catalog, vocab


def parse_time(text: str) -> int:
    """Epoch seconds for a log timestamp (fixed UTC convention)."""
    dt = datetime.strptime(text.strip(), _TIME_FORMAT)
    return int(dt.replace(tzinfo=timezone.utc).timestamp())


def format_time(epoch_seconds: int) -> str:
    dt = datetime.fromtimestamp(int(epoch_seconds), tz=timezone.utc)
    hour = dt.hour % 12 or 12
    half = "AM" if dt.hour < 12 else "PM"
    return f"{dt.month:02d}/{dt.day:02d}/{dt.year} {hour}:{dt.minute:02d}:{dt.second:02d} {half}"


def _parse_candidate(token: str) -> tuple[str, int]:
    news_id, sep, label = token.rpartition("-")
    if not sep or not news_id:
        raise ValueError(f"candidate {token!r} is not of the form <news_id>-<label>")
    if label not in ("0", "1"):
        raise ValueError(f"candidate {token!r} has label {label!r}, expected 0 or 1")
    return news_id, int(label)


def _record_from_json(obj) -> ImpressionRecord:
    shown = [(str(n), int(lab)) for n, lab in obj["shown"]]
    for news_id, label in shown:
        if label not in (0, 1):
            raise ValueError(f"candidate {news_id!r} has label {label!r}, expected 0 or 1")
    if not shown:
        raise ValueError("record has an empty shown list")
    return ImpressionRecord(
        impression_id=str(obj["impression_id"]),
        user_id=str(obj["user_id"]),
        time=int(obj["time"]),
        history=[str(h) for h in obj["history"]],
        shown=shown,
    )


def _record_from_tsv(line: str) -> ImpressionRecord:
    cols = line.split("\t")
    if len(cols) != 5:
        raise ValueError(f"expected 5 columns, got {len(cols)}")
    impression_id, user_id, time_text, history_text, shown_text = cols
    shown_tokens = shown_text.split()
    if not shown_tokens:
        raise ValueError("record has an empty shown list")
    return ImpressionRecord(
        impression_id=impression_id,
        user_id=user_id,
        time=parse_time(time_text),
        history=history_text.split(),
        shown=[_parse_candidate(tok) for tok in shown_tokens],
    )


def parse_behaviors_file(path) -> ImpressionLog:
    """Parse a behaviors log (TSV or JSONL) into time-sorted records.

    Rows with an unparseable timestamp, label, or column layout are
    skipped and recorded as issues rather than aborting the whole file.
    """
    records = []
    issues = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            try:
                if line.lstrip().startswith("{"):
                    rec = _record_from_json(json.loads(line))
                else:
                    rec = _record_from_tsv(line)
            except (ValueError, KeyError, TypeError) as exc:
                issues.append(ParseIssue(line_no, str(exc)))
                continue
            records.append(rec)
    records.sort(key=lambda r: r.time)
    return ImpressionLog(records, issues)


def format_behaviors_line(record: ImpressionRecord) -> str:
    """Render a record back to the TSV row syntax (inverse of the parser)."""
    shown = " ".join(f"{n}-{lab}" for n, lab in record.shown)
    return "\t".join([
        record.impression_id,
        record.user_id,
        format_time(record.time),
        " ".join(record.history),
        shown,
    ])


def record_to_json(record: ImpressionRecord) -> str:
    return json.dumps({
        "impression_id": record.impression_id,
        "user_id": record.user_id,
        "time": record.time,
        "history": record.history,
        "shown": [[n, lab] for n, lab in record.shown],
    }, separators=(",", ":"))


def load_word_vectors(path, vocab: Vocabulary, dim: int,
                      init_range: float = 0.1, seed: int = 0) -> np.ndarray:
    """Build a ``len(vocab) x dim`` embedding matrix from a text vector file.

    Each line is a token followed by ``dim`` floats.  Vocabulary tokens
    found in the file get their vectors verbatim; the rest are drawn
    uniformly from ``[-init_range, init_range]`` (seeded).  The padding
    row is forced to zeros.
    """
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-init_range, init_range, size=(len(vocab), dim))
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip().split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise CorpusError(
                    f"line {line_no}: expected {dim} vector components, got {len(values)}")
            if token in vocab:
                matrix[vocab.token_to_index[token]] = [float(v) for v in values]
    matrix[vocab.pad_index] = 0.0
    return matrix


def split_log_by_time(log: ImpressionLog, val_fraction: float,
                      test_fraction: float) -> tuple[ImpressionLog, ImpressionLog, ImpressionLog]:
    """Chronological train/validation/test split of a single log.

    Mirrors day-based dataset splits at small scale: the earliest records
    train, the next ``val_fraction`` validate, the last ``test_fraction``
    test.  Fractions apply to the record count of the time-sorted log.
    """
    if val_fraction < 0 or test_fraction < 0 or val_fraction + test_fraction >= 1:
        raise ValueError("val_fraction and test_fraction must be nonnegative and sum below 1")
    n = len(log.records)
    n_test = int(math.floor(n * test_fraction))
    n_val = int(math.floor(n * val_fraction))
    n_train = n - n_val - n_test
    recs = log.records
    return (
        ImpressionLog(recs[:n_train]),
        ImpressionLog(recs[n_train:n_train + n_val]),
        ImpressionLog(recs[n_train + n_val:]),
    )
