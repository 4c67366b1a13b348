"""Tokenization, punctuation structure, vocabularies and dataset/embedding loading.

Documents are token sequences in which the five symbols , ; . ! ? are
structural: commas/semicolons close a sub-sentence, .!? close a sentence.
Each document carries a jump table mapping every position to the resume
position for each of the four forward-jump actions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

PAD_ID = 0
UNK_ID = 1

SUB_SEP_CHARS = {",", ";"}
SENT_END_CHARS = {".", "!", "?"}
STRUCTURAL_CHARS = SUB_SEP_CHARS | SENT_END_CHARS

# jump-action indices, shared with agents.JumpAction
NEXT_WORD = 0
NEXT_SUB_SEP = 1
NEXT_SENT_END = 2
END_OF_TEXT = 3


class TokenKind(IntEnum):
    WORD = 0
    SUB_SEP = 1
    SENT_END = 2


@dataclass
class Token:
    surface: str
    id: int
    kind: TokenKind


class Vocabulary:
    """Bidirectional surface<->id map with reserved PAD=0 and UNK=1."""

    def __init__(self):
        self._surface_to_id = {}
        self._id_to_surface = ["<pad>", "<unk>"]

    def __len__(self):
        return len(self._id_to_surface)

    def __contains__(self, surface):
        return surface in self._surface_to_id

    def add(self, surface: str) -> int:
        """Insert a surface (first-seen order) and return its id."""
        idx = self._surface_to_id.get(surface)
        if idx is None:
            idx = len(self._id_to_surface)
            self._surface_to_id[surface] = idx
            self._id_to_surface.append(surface)
        return idx

    def lookup(self, surface: str) -> int:
        return self._surface_to_id.get(surface, UNK_ID)

    def surface(self, idx: int) -> str:
        return self._id_to_surface[idx]

    def surfaces(self):
        """Non-reserved surfaces in id order."""
        return list(self._id_to_surface[2:])

    @classmethod
    def from_surfaces(cls, surfaces) -> "Vocabulary":
        vocab = cls()
        for s in surfaces:
            vocab.add(s)
        return vocab

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for s in self.surfaces():
                fh.write(s + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_surfaces(line.rstrip("\n") for line in fh)


def _classify(surface: str) -> TokenKind:
    if surface in SUB_SEP_CHARS:
        return TokenKind.SUB_SEP
    if surface in SENT_END_CHARS:
        return TokenKind.SENT_END
    return TokenKind.WORD


def _split_chunk(chunk: str):
    """Split one whitespace chunk into a word plus detached trailing punctuation."""
    tail = []
    while chunk and chunk[-1] in STRUCTURAL_CHARS:
        tail.append(chunk[-1])
        chunk = chunk[:-1]
    parts = [chunk] if chunk else []
    parts.extend(reversed(tail))
    return parts


def tokenize(text: str, vocab: Vocabulary, grow_vocab: bool = False) -> list[Token]:
    """Lowercase, whitespace-split, and detach , ; . ! ? into their own tokens.

    Unknown surfaces map to UNK unless grow_vocab is set (vocabulary building).
    Empty text yields an empty list; callers decide whether that is an error.
    """
    tokens = []
    for chunk in text.lower().split():
        for surface in _split_chunk(chunk):
            if grow_vocab:
                idx = vocab.add(surface)
            else:
                idx = vocab.lookup(surface)
            tokens.append(Token(surface, idx, _classify(surface)))
    return tokens


def build_jump_table(tokens: list[Token]) -> np.ndarray:
    """Resume positions for every (position, jump action); terminal sentinel is len(tokens).

    A jump lands just past the next boundary token: the boundary itself is not
    re-read. Sentence ends also close the enclosing sub-sentence. Targets past
    the end collapse to the terminal sentinel.
    """
    n = len(tokens)
    if n == 0:
        raise ValueError("cannot build a jump table for an empty token list")
    table = np.empty((n, 4), dtype=np.int64)
    # scan backwards carrying the position just past the next boundary of each kind
    next_sub = n
    next_sent = n
    for i in range(n - 1, -1, -1):
        table[i, NEXT_WORD] = i + 1
        table[i, NEXT_SUB_SEP] = next_sub
        table[i, NEXT_SENT_END] = next_sent
        table[i, END_OF_TEXT] = n
        kind = tokens[i].kind
        if kind is TokenKind.SENT_END:
            next_sent = min(i + 1, n)
            next_sub = min(i + 1, n)
        elif kind is TokenKind.SUB_SEP:
            next_sub = min(i + 1, n)
    return table


@dataclass
class Document:
    tokens: list[Token]
    label: int
    jump_table: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("document has no tokens")
        if self.jump_table is None:
            self.jump_table = build_jump_table(self.tokens)

    def __len__(self):
        return len(self.tokens)

    @property
    def token_ids(self):
        return [t.id for t in self.tokens]

    def text(self) -> str:
        return " ".join(t.surface for t in self.tokens)


def _iter_records(path, fmt):
    """Yield (line_number, label_field, text_field) from a dataset file."""
    with open(path, encoding="utf-8") as fh:
        if fmt == "tsv":
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if "\t" not in line:
                    raise ValueError(f"{path}: line {lineno}: no field separator")
                label, text = line.split("\t", 1)
                yield lineno, label, text
        elif fmt == "csv":
            reader = csv.reader(fh)
            for lineno, row in enumerate(reader, start=1):
                if not row:
                    continue
                if len(row) != 2:
                    raise ValueError(
                        f"{path}: line {lineno}: expected 2 quoted fields, got {len(row)}"
                    )
                yield lineno, row[0], row[1]
        else:
            raise ValueError(f"unknown dataset format: {fmt!r}")


def load_dataset(path, fmt="tsv", vocab=None, label_map=None):
    """Load `label<TAB>text` (or quoted-csv) lines into Documents.

    When vocab/label_map are None this is the training split: the vocabulary is
    built from it and labels are assigned contiguous indices in first-seen
    order. Otherwise both are frozen and an unseen label is an error.

    Returns (documents, vocab, label_map).
    """
    building = vocab is None
    if building:
        vocab = Vocabulary()
    if label_map is None and not building:
        raise ValueError("label_map is required when a vocabulary is given")
    freeze_labels = label_map is not None
    if label_map is None:
        label_map = {}

    docs = []
    for lineno, label, text in _iter_records(path, fmt):
        if label not in label_map:
            if freeze_labels:
                raise ValueError(f"{path}: line {lineno}: unknown label {label!r}")
            label_map[label] = len(label_map)
        tokens = tokenize(text, vocab, grow_vocab=building)
        if not tokens:
            raise ValueError(f"{path}: line {lineno}: empty document")
        docs.append(Document(tokens, label_map[label]))
    return docs, vocab, label_map


@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # (vocab size, dim), row PAD_ID all zeros
    trainable: bool = True

    @property
    def dim(self):
        return self.matrix.shape[1]


def random_embeddings(vocab: Vocabulary, dim: int, rng) -> EmbeddingTable:
    """Uniform(-0.05, 0.05) table with a zero PAD row."""
    matrix = rng.uniform(-0.05, 0.05, size=(len(vocab), dim))
    matrix[PAD_ID] = 0.0
    return EmbeddingTable(matrix)


def load_embeddings(path, vocab: Vocabulary, dim: int, rng) -> EmbeddingTable:
    """Read GloVe-format text vectors; words missing from the file stay random.

    Raises on a dimension mismatch between `dim` and the file's vectors.
    """
    table = random_embeddings(vocab, dim, rng)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(
                    f"{path}: line {lineno}: vector has {len(values)} dims, expected {dim}"
                )
            if word in vocab:
                table.matrix[vocab.lookup(word)] = [float(v) for v in values]
    table.matrix[PAD_ID] = 0.0
    return table
