"""Synthetic keyword-classification corpus for tests and demos.

Each document has three sentences; the label is decided entirely by which of
two keywords appears in the first sentence, so a well-trained speed reader can
stop paying attention once the keyword has been read.
"""

from __future__ import annotations

FILLERS = [
    "the", "a", "old", "boat", "river", "stone", "wind", "garden", "light",
    "door", "summer", "village", "morning", "road", "tree", "bird", "cloud",
    "meadow", "winter", "horse", "field", "lamp", "bridge", "song", "rain",
    "hill", "forest", "corner", "market", "harbor",
]

KEYWORDS = ("dreadful", "wonderful")  # class 0, class 1


def _sentence(rng, length, keyword=None):
    words = [FILLERS[rng.integers(len(FILLERS))] for _ in range(length)]
    if keyword is not None:
        words.insert(int(rng.integers(len(words) + 1)), keyword)
    if len(words) > 3 and rng.random() < 0.4:
        words.insert(int(rng.integers(1, len(words))), ",")
    words.append("." if rng.random() < 0.8 else "!")
    return words


def generate_keyword_docs(n, rng):
    """n (label, text) rows; label '0' or '1' from the sentence-1 keyword."""
    rows = []
    for _ in range(n):
        label = int(rng.integers(2))
        words = _sentence(rng, int(rng.integers(3, 7)), keyword=KEYWORDS[label])
        for _ in range(2):
            words.extend(_sentence(rng, int(rng.integers(4, 9))))
        text = " ".join(words)
        rows.append((str(label), text))
    return rows


def write_tsv(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for label, text in rows:
            fh.write(f"{label}\t{text}\n")
