"""Shared builders for tests: toy models with healthy-scale random tensors
(kept away from ReLU kinks so finite-difference checks are well posed) and
hand-rigged models with forced behaviours."""

import numpy as np
import pytest

from jumpreader.agents import AgentNet, skip_input_dim
from jumpreader.corpus import Document, EmbeddingTable, Vocabulary, tokenize
from jumpreader.model import ClassifierHead, ModelParams
from jumpreader.nncore import Dense, LstmCell


def make_toy_model(seed, vocab_size, embed_dim=4, cell_size=6, trunk_width=3,
                   n_classes=2):
    """Small model with uniform(-0.5, 0.5) weights and biases (embeddings
    uniform(-1, 1)); nothing sits near a ReLU kink for generic inputs."""
    r = np.random.default_rng([seed, 555])

    def u(*shape, s=0.5):
        return r.uniform(-s, s, size=shape)

    emb = u(vocab_size, embed_dim, s=1.0)
    emb[0] = 0.0
    return ModelParams(
        embedding=EmbeddingTable(emb),
        lstm=LstmCell(u(4 * cell_size, embed_dim + cell_size), u(4 * cell_size),
                      cell_size),
        skip_agent=AgentNet(
            Dense(u(trunk_width, skip_input_dim(embed_dim, cell_size)),
                  u(trunk_width), "relu"),
            Dense(u(2, trunk_width), u(2)),
            Dense(u(1, trunk_width), u(1))),
        jump_agent=AgentNet(
            Dense(u(trunk_width, cell_size), u(trunk_width), "relu"),
            Dense(u(4, trunk_width), u(4)),
            Dense(u(1, trunk_width), u(1))),
        classifier=ClassifierHead(
            Dense(u(cell_size, cell_size), u(cell_size), "relu"),
            Dense(u(n_classes, cell_size), u(n_classes))),
    )


def rig_policies(params, skip_action=None, jump_action=None, bias=50.0):
    """Force deterministic agent choices by loading one policy-head bias."""
    if skip_action is not None:
        params.skip_agent.policy.w[:] = 0.0
        params.skip_agent.policy.b[:] = 0.0
        params.skip_agent.policy.b[int(skip_action)] = bias
    if jump_action is not None:
        params.jump_agent.policy.w[:] = 0.0
        params.jump_agent.policy.b[:] = 0.0
        params.jump_agent.policy.b[int(jump_action)] = bias
    return params


def docs_from_texts(texts, labels=None):
    """Build one vocabulary over the texts and documents against it."""
    vocab = Vocabulary()
    labels = labels or [0] * len(texts)
    docs = [Document(tokenize(t, vocab, grow_vocab=True), int(lab))
            for t, lab in zip(texts, labels)]
    return docs, vocab


def random_token_text(rng, length):
    """Token string over a tiny alphabet with structural punctuation mixed in."""
    alphabet = ["a", "b", "c", "d", ",", ";", ".", "!", "?"]
    return " ".join(alphabet[rng.integers(len(alphabet))] for _ in range(length))


def easy_rows(n, rng):
    """Single-sentence keyword task; separable within a couple of epochs."""
    from jumpreader.synthetic import FILLERS, KEYWORDS

    rows = []
    for _ in range(n):
        label = int(rng.integers(2))
        words = [FILLERS[rng.integers(len(FILLERS))]
                 for _ in range(int(rng.integers(2, 5)))]
        words.insert(int(rng.integers(len(words) + 1)), KEYWORDS[label])
        words.append(".")
        rows.append((str(label), " ".join(words)))
    return rows


@pytest.fixture
def toy_doc():
    docs, vocab = docs_from_texts(["a b , c d . e f g !"])
    return docs[0], vocab
