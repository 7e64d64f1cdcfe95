"""Corpus loading, validation, and pool/gold partitioning.

A corpus file is UTF-8, one JSON record per line with fields ``id`` (string),
``title`` (string), ``description`` (string, optional), ``image_embedding``
(array of numbers, optional), ``gold_label`` (0/1, optional). A gold-id list
is plain text, one id per line.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping


class CorpusFormatError(ValueError):
    """Raised when a corpus file or record violates the corpus contract."""


class SplitError(ValueError):
    """Raised when a pool/gold split request is inconsistent with the corpus."""


class Label(enum.IntEnum):
    """Binary relevance label, serialized as the integers 1 and 0."""

    IRRELEVANT = 0
    RELEVANT = 1


@dataclass(frozen=True)
class Item:
    """One ad record: the classification-relevant fields only."""

    id: str
    title: str
    description: str | None = None
    image_embedding: tuple[float, ...] | None = None
    gold_label: Label | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusFormatError("item id must be a nonempty string")
        if not self.title.strip():
            raise CorpusFormatError(f"item {self.id!r}: title is empty")


@dataclass(frozen=True)
class CorpusStats:
    """Class counts, present only when every item carries a gold label."""

    n: int
    n_pos: int
    n_neg: int

    @property
    def k(self) -> float:
        """Base rate ratio n_pos / n_neg (inf for an all-positive corpus)."""
        return self.n_pos / self.n_neg if self.n_neg else float("inf")


@dataclass(frozen=True)
class Corpus:
    """Immutable, ordered collection of items with unique ids."""

    items: tuple[Item, ...]
    embedding_dim: int | None = None

    def __post_init__(self) -> None:
        seen: dict[str, int] = {}
        for pos, item in enumerate(self.items):
            if item.id in seen:
                raise CorpusFormatError(
                    f"duplicate id {item.id!r} at positions {seen[item.id]} and {pos}"
                )
            seen[item.id] = pos
            if item.image_embedding is not None and self.embedding_dim is not None:
                if len(item.image_embedding) != self.embedding_dim:
                    raise CorpusFormatError(
                        f"item {item.id!r}: embedding dimension "
                        f"{len(item.image_embedding)} != declared {self.embedding_dim}"
                    )

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(item.id for item in self.items)

    @property
    def stats(self) -> CorpusStats | None:
        """Counts over gold labels; None unless every item is gold-labeled."""
        if any(item.gold_label is None for item in self.items):
            return None
        n_pos = sum(1 for item in self.items if item.gold_label == Label.RELEVANT)
        return CorpusStats(n=len(self.items), n_pos=n_pos, n_neg=len(self.items) - n_pos)

    def get(self, item_id: str) -> Item:
        for item in self.items:
            if item.id == item_id:
                return item
        raise KeyError(item_id)


@dataclass(frozen=True)
class GoldSet:
    """Expert-labeled validation items, disjoint from the sampling pool."""

    items: tuple[Item, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for item in self.items:
            if item.gold_label is None:
                raise SplitError(f"gold item {item.id!r} lacks a gold label")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(item.id for item in self.items)

    def lookup(self) -> dict[str, Label]:
        """id -> gold label mapping, e.g. for the oracle labeler."""
        return {item.id: item.gold_label for item in self.items}


def _parse_record(raw: Mapping, line_no: int) -> Item:
    if not isinstance(raw, Mapping):
        raise CorpusFormatError(f"line {line_no}: record is not an object")
    try:
        item_id = raw["id"]
        title = raw["title"]
    except KeyError as exc:
        raise CorpusFormatError(f"line {line_no}: missing field {exc.args[0]!r}") from None
    if not isinstance(item_id, str) or not item_id:
        raise CorpusFormatError(f"line {line_no}: id must be a nonempty string")
    if not isinstance(title, str) or not title.strip():
        raise CorpusFormatError(f"line {line_no}: empty title for id {item_id!r}")

    description = raw.get("description")
    if description is not None and not isinstance(description, str):
        raise CorpusFormatError(f"line {line_no}: description must be a string")

    embedding = raw.get("image_embedding")
    if embedding is not None:
        try:
            embedding = tuple(float(x) for x in embedding)
        except (TypeError, ValueError):
            raise CorpusFormatError(
                f"line {line_no}: image_embedding must be an array of numbers"
            ) from None

    gold = raw.get("gold_label")
    if gold is not None:
        if gold not in (0, 1):
            raise CorpusFormatError(f"line {line_no}: gold_label must be 0 or 1, got {gold!r}")
        gold = Label(gold)

    return Item(
        id=item_id,
        title=title,
        description=description,
        image_embedding=embedding,
        gold_label=gold,
    )


def load_corpus(path: str | Path) -> Corpus:
    """Load a line-delimited corpus file, validating every record.

    Errors carry the 1-based line number; a duplicate id names both offending
    lines. Input order is preserved.
    """
    items: list[Item] = []
    line_of_id: dict[str, int] = {}
    embedding_dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {line_no}: malformed record ({exc.msg})") from None
            item = _parse_record(raw, line_no)
            if item.id in line_of_id:
                raise CorpusFormatError(
                    f"duplicate id {item.id!r} on lines {line_of_id[item.id]} and {line_no}"
                )
            line_of_id[item.id] = line_no
            if item.image_embedding is not None:
                if embedding_dim is None:
                    embedding_dim = len(item.image_embedding)
                elif len(item.image_embedding) != embedding_dim:
                    raise CorpusFormatError(
                        f"line {line_no}: embedding dimension {len(item.image_embedding)} "
                        f"differs from earlier dimension {embedding_dim}"
                    )
            items.append(item)
    return Corpus(items=tuple(items), embedding_dim=embedding_dim)


def item_to_record(item: Item) -> dict:
    """JSON-serializable record for one item; inverse of record parsing."""
    record: dict = {"id": item.id, "title": item.title}
    if item.description is not None:
        record["description"] = item.description
    if item.image_embedding is not None:
        record["image_embedding"] = list(item.image_embedding)
    if item.gold_label is not None:
        record["gold_label"] = int(item.gold_label)
    return record


def dump_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back to the line-delimited file format."""
    with open(path, "w", encoding="utf-8") as fh:
        for item in corpus:
            fh.write(json.dumps(item_to_record(item), ensure_ascii=False) + "\n")


def load_gold_ids(path: str | Path) -> set[str]:
    """Read a plain-text gold-id list, one id per line, blank lines ignored."""
    with open(path, encoding="utf-8") as fh:
        return {line.strip() for line in fh if line.strip()}


def split_pool_gold(corpus: Corpus, gold_ids: Iterable[str]) -> tuple[Corpus, GoldSet]:
    """Partition a corpus into the sampling pool and the gold validation set.

    Every gold id must exist in the corpus and carry a gold label. The pool
    and gold set are disjoint by id and jointly cover the corpus; gold items
    are physically removed from the pool so they can never be pseudo-labeled.
    """
    wanted = set(gold_ids)
    missing = wanted - {item.id for item in corpus}
    if missing:
        raise SplitError(f"gold ids missing from corpus: {sorted(missing)!r}")
    pool_items: list[Item] = []
    gold_items: list[Item] = []
    for item in corpus:
        if item.id in wanted:
            if item.gold_label is None:
                raise SplitError(f"gold id {item.id!r} lacks a gold label")
            gold_items.append(item)
        else:
            pool_items.append(item)
    pool = Corpus(items=tuple(pool_items), embedding_dim=corpus.embedding_dim)
    return pool, GoldSet(items=tuple(gold_items))
