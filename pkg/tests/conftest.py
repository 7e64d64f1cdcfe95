import json

import pytest

from ltsample.dataset import Corpus, Item, Label


def make_item(i, title=None, label=None, description=None, embedding=None):
    return Item(
        id=f"i{i:04d}",
        title=title if title is not None else f"item number {i}",
        description=description,
        image_embedding=embedding,
        gold_label=label,
    )


def make_corpus(n=10, n_pos=0, embedding_dim=None):
    """Small fully-labeled corpus: first n_pos items positive."""
    items = []
    for i in range(n):
        label = Label.RELEVANT if i < n_pos else Label.IRRELEVANT
        emb = None
        if embedding_dim:
            emb = tuple(float(i + j) for j in range(embedding_dim))
        items.append(make_item(i, label=label, embedding=emb))
    return Corpus(items=tuple(items), embedding_dim=embedding_dim)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path


@pytest.fixture
def tiny_corpus():
    return make_corpus(n=12, n_pos=4)
