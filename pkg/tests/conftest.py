import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make mockendpoints importable

from litrag.corpus import DocumentMeta

WORDS = (
    "nanomaterials spectroscopy catalysis graphene polymer membrane sensor "
    "quantum photonic electrode battery coating corrosion alloy ceramic "
    "composite nanotube fullerene plasmonic biosensor electrolyte oxide "
    "titania silica zeolite perovskite ligand substrate dopant lattice"
).split()


def make_meta(i: int, **overrides) -> DocumentMeta:
    fields = {
        "doi": f"10.1000/test.{i}",
        "title": f"Study {i} of {WORDS[i % len(WORDS)]}",
        "authors": [f"Author {i}", f"Coauthor {i}"],
        "year": 2000 + (i % 25),
        "source": "other",
        "url": None,
    }
    fields.update(overrides)
    return DocumentMeta(**fields)


def make_text(i: int, n_words: int = 60) -> str:
    return " ".join(WORDS[(i + j) % len(WORDS)] for j in range(n_words))


def corpus_obj(i: int, **overrides) -> dict:
    obj = {
        "doi": f"10.1000/test.{i}",
        "title": f"Study {i} of {WORDS[i % len(WORDS)]}",
        "authors": [f"Author {i}"],
        "year": 2000 + (i % 25),
        "source": "other",
        "url": None,
        "text": make_text(i),
    }
    obj.update(overrides)
    return obj


def corpus_jsonl(count: int) -> str:
    return "\n".join(json.dumps(corpus_obj(i)) for i in range(count)) + "\n"


@pytest.fixture
def corpus_file(tmp_path):
    def write(count: int, name: str = "corpus.jsonl") -> str:
        path = tmp_path / name
        path.write_text(corpus_jsonl(count), encoding="utf-8")
        return str(path)

    return write
