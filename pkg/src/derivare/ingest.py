"""Loading a markdown corpus from disk and cutting it into overlapping chunks."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import EmptyCorpus, InvalidConfig

logger = logging.getLogger(__name__)

TEXT_SUFFIXES = frozenset({".md", ".markdown", ".txt"})
DEFAULT_MAX_CHARS = 1000
DEFAULT_OVERLAP_CHARS = 200


class SkippedFileWarning(UserWarning):
    """Emitted for each file in a corpus directory that is not loaded."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    source_uri: str | None = None


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    char_offset: int


def load_corpus(path: str | Path) -> list[Document]:
    """Read every markdown / plain-text file under ``path``, sorted by relative path.

    Other files are skipped with a :class:`SkippedFileWarning`.  Raises
    ``OSError`` when ``path`` is not a readable directory and
    :class:`EmptyCorpus` when nothing was loaded.
    """
    root = Path(path)
    if not root.is_dir():
        raise NotADirectoryError(f"corpus path {root} is not a directory")

    docs = []
    for file in sorted(p for p in root.rglob("*") if p.is_file()):
        doc_id = file.relative_to(root).as_posix()
        if file.suffix.lower() not in TEXT_SUFFIXES:
            warnings.warn(f"skipping non-text file {doc_id}", SkippedFileWarning, stacklevel=2)
            continue
        try:
            text = file.read_text(encoding="utf-8")
        except UnicodeDecodeError:
            warnings.warn(f"skipping {doc_id}: not valid UTF-8", SkippedFileWarning, stacklevel=2)
            continue
        docs.append(Document(doc_id=doc_id, text=text, source_uri=file.resolve().as_uri()))

    docs.sort(key=lambda d: d.doc_id)
    if not docs:
        raise EmptyCorpus(f"no text documents found under {root}")
    logger.info("loaded %d documents from %s", len(docs), root)
    return docs


def chunk_offsets(length: int, max_chars: int, overlap_chars: int) -> list[int]:
    """Start offsets of the sliding windows covering ``length`` characters."""
    if max_chars <= 0 or not 0 <= overlap_chars < max_chars:
        raise InvalidConfig(
            f"need 0 <= overlap_chars < max_chars, got overlap={overlap_chars}, max={max_chars}"
        )
    stride = max_chars - overlap_chars
    offsets = []
    start = 0
    while start < length:
        offsets.append(start)
        if start + max_chars >= length:
            break
        start += stride
    return offsets


def chunk_document(
    doc: Document,
    max_chars: int = DEFAULT_MAX_CHARS,
    overlap_chars: int = DEFAULT_OVERLAP_CHARS,
) -> list[Chunk]:
    return [
        Chunk(
            chunk_id=f"{doc.doc_id}#{i}",
            doc_id=doc.doc_id,
            text=doc.text[start : start + max_chars],
            char_offset=start,
        )
        for i, start in enumerate(chunk_offsets(len(doc.text), max_chars, overlap_chars))
    ]


def chunk_corpus(
    docs: Iterable[Document],
    max_chars: int = DEFAULT_MAX_CHARS,
    overlap_chars: int = DEFAULT_OVERLAP_CHARS,
) -> list[Chunk]:
    chunks = []
    for doc in docs:
        chunks.extend(chunk_document(doc, max_chars, overlap_chars))
    return chunks


# JSONL chunk store: one {"chunk_id", "doc_id", "char_offset", "text"} per line.

def write_chunks(path: str | Path, chunks: Iterable[Chunk]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in chunks:
            row = {"chunk_id": c.chunk_id, "doc_id": c.doc_id, "char_offset": c.char_offset, "text": c.text}
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_chunks(path: str | Path) -> list[Chunk]:
    chunks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                chunks.append(Chunk(row["chunk_id"], row["doc_id"], row["text"], int(row["char_offset"])))
    return chunks
