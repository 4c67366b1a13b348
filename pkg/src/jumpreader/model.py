"""Model parameter bundle: embeddings, LSTM cell, both agents, classifier head."""

from __future__ import annotations

import copy

from .agents import (
    N_JUMP_ACTIONS,
    N_SKIP_ACTIONS,
    TRUNK_WIDTH,
    AgentNet,
    skip_input_dim,
)
from .corpus import EmbeddingTable
from .nncore import Dense, LstmCell, load_checkpoint, save_checkpoint


class ClassifierHead:
    """ReLU hidden layer of cell size followed by a linear layer onto the classes."""

    def __init__(self, hidden: Dense, out: Dense):
        if hidden.activation != "relu" or hidden.n_out != hidden.n_in:
            raise ValueError("classifier hidden layer must be a square relu layer")
        if out.n_in != hidden.n_out:
            raise ValueError("classifier output layer does not match hidden width")
        self.hidden = hidden
        self.out = out

    @classmethod
    def glorot(cls, rng, cell_size, n_classes):
        return cls(
            Dense.glorot(rng, cell_size, cell_size, activation="relu"),
            Dense.glorot(rng, cell_size, n_classes),
        )

    @property
    def n_classes(self):
        return self.out.n_out


class ModelParams:
    """All trainable tensors of the speed reader, addressable by name."""

    def __init__(self, embedding: EmbeddingTable, lstm: LstmCell,
                 skip_agent: AgentNet, jump_agent: AgentNet,
                 classifier: ClassifierHead):
        self.embedding = embedding
        self.lstm = lstm
        self.skip_agent = skip_agent
        self.jump_agent = jump_agent
        self.classifier = classifier

    @classmethod
    def new(cls, rng, vocab_size, embed_dim, cell_size, n_classes,
            trunk_width=TRUNK_WIDTH, embedding=None):
        """Fresh Glorot-initialized model; a preloaded embedding table may be given."""
        if embedding is None:
            matrix = rng.uniform(-0.05, 0.05, size=(vocab_size, embed_dim))
            matrix[0] = 0.0
            embedding = EmbeddingTable(matrix)
        if embedding.dim != embed_dim:
            raise ValueError("embedding table dimension does not match embed_dim")
        return cls(
            embedding=embedding,
            lstm=LstmCell.glorot(rng, embed_dim, cell_size),
            skip_agent=AgentNet.glorot(
                rng, skip_input_dim(embed_dim, cell_size), N_SKIP_ACTIONS, trunk_width),
            jump_agent=AgentNet.glorot(rng, cell_size, N_JUMP_ACTIONS, trunk_width),
            classifier=ClassifierHead.glorot(rng, cell_size, n_classes),
        )

    @property
    def embed_dim(self):
        return self.embedding.dim

    @property
    def cell_size(self):
        return self.lstm.m

    @property
    def n_classes(self):
        return self.classifier.n_classes

    def tensors(self):
        """Live name->array views over every parameter tensor."""
        return {
            "embedding": self.embedding.matrix,
            "lstm.w": self.lstm.w,
            "lstm.b": self.lstm.b,
            "skip.trunk.w": self.skip_agent.trunk.w,
            "skip.trunk.b": self.skip_agent.trunk.b,
            "skip.policy.w": self.skip_agent.policy.w,
            "skip.policy.b": self.skip_agent.policy.b,
            "skip.value.w": self.skip_agent.value.w,
            "skip.value.b": self.skip_agent.value.b,
            "jump.trunk.w": self.jump_agent.trunk.w,
            "jump.trunk.b": self.jump_agent.trunk.b,
            "jump.policy.w": self.jump_agent.policy.w,
            "jump.policy.b": self.jump_agent.policy.b,
            "jump.value.w": self.jump_agent.value.w,
            "jump.value.b": self.jump_agent.value.b,
            "classifier.hidden.w": self.classifier.hidden.w,
            "classifier.hidden.b": self.classifier.hidden.b,
            "classifier.out.w": self.classifier.out.w,
            "classifier.out.b": self.classifier.out.b,
        }

    def trainable_names(self):
        names = set(self.tensors())
        if not self.embedding.trainable:
            names.discard("embedding")
        return names

    def clone(self) -> "ModelParams":
        return copy.deepcopy(self)

    def save(self, path):
        save_checkpoint(path, self.tensors())

    @classmethod
    def load(cls, path) -> "ModelParams":
        t = load_checkpoint(path)
        required = {
            "embedding", "lstm.w", "lstm.b",
            "skip.trunk.w", "skip.trunk.b", "skip.policy.w", "skip.policy.b",
            "skip.value.w", "skip.value.b",
            "jump.trunk.w", "jump.trunk.b", "jump.policy.w", "jump.policy.b",
            "jump.value.w", "jump.value.b",
            "classifier.hidden.w", "classifier.hidden.b",
            "classifier.out.w", "classifier.out.b",
        }
        missing = required - set(t)
        if missing:
            raise ValueError(f"{path}: checkpoint is missing tensors: {sorted(missing)}")
        cell_size = t["lstm.b"].shape[0] // 4

        def dense(prefix, activation="linear"):
            return Dense(t[prefix + ".w"], t[prefix + ".b"], activation)

        return cls(
            embedding=EmbeddingTable(t["embedding"]),
            lstm=LstmCell(t["lstm.w"], t["lstm.b"], cell_size),
            skip_agent=AgentNet(
                dense("skip.trunk", "relu"), dense("skip.policy"), dense("skip.value")),
            jump_agent=AgentNet(
                dense("jump.trunk", "relu"), dense("jump.policy"), dense("jump.value")),
            classifier=ClassifierHead(
                dense("classifier.hidden", "relu"), dense("classifier.out")),
        )
