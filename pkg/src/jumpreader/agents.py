"""Skip and jump agents: small ReLU-trunk networks with policy and value heads.

The skip agent sees the current word embedding, the previous LSTM output, and
one-hot encodings of the previous actions; the jump agent sees the fresh LSTM
output. Both decide through a softmax policy head; a linear value head on the
shared trunk estimates the return for actor-critic training.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

from .nncore import Dense, dense_forward, softmax

TRUNK_WIDTH = 25


class SkipAction(IntEnum):
    SKIP = 0
    READ = 1


class JumpAction(IntEnum):
    NEXT_WORD = 0
    NEXT_SUB_SEP = 1
    NEXT_SENT_END = 2
    END_OF_TEXT = 3


N_SKIP_ACTIONS = len(SkipAction)
N_JUMP_ACTIONS = len(JumpAction)
PREV_ENCODING_DIM = N_SKIP_ACTIONS + N_JUMP_ACTIONS


def encode_prev_actions(prev_skip, prev_jump) -> np.ndarray:
    """One-hot pair for the previous (skip, jump) actions; None means the
    all-zero sentinel (episode start, or no jump because the word was skipped)."""
    enc = np.zeros(PREV_ENCODING_DIM)
    if prev_skip is not None:
        enc[int(prev_skip)] = 1.0
    if prev_jump is not None:
        enc[N_SKIP_ACTIONS + int(prev_jump)] = 1.0
    return enc


def skip_input_dim(embed_dim, cell_size):
    return embed_dim + cell_size + PREV_ENCODING_DIM


class AgentNet:
    """ReLU trunk feeding a softmax policy head and a scalar value head."""

    def __init__(self, trunk: Dense, policy: Dense, value: Dense):
        if trunk.activation != "relu":
            raise ValueError("agent trunk must use relu activation")
        if policy.n_in != trunk.n_out or value.n_in != trunk.n_out or value.n_out != 1:
            raise ValueError("agent head shapes do not match trunk width")
        self.trunk = trunk
        self.policy = policy
        self.value = value

    @classmethod
    def glorot(cls, rng, input_dim, n_actions, trunk_width=TRUNK_WIDTH):
        return cls(
            Dense.glorot(rng, input_dim, trunk_width, activation="relu"),
            Dense.glorot(rng, trunk_width, n_actions),
            Dense.glorot(rng, trunk_width, 1),
        )

    @property
    def n_actions(self):
        return self.policy.n_out

    def trunk_forward(self, x):
        """Trunk state for an input; returns (state, cache)."""
        return dense_forward(self.trunk, x)

    def policy_forward(self, state):
        """Action distribution from a trunk state; returns (dist, cache)."""
        logits, cache = dense_forward(self.policy, state)
        return softmax(logits), cache

    def value_forward(self, state):
        """Scalar return estimate from a trunk state; returns (value, cache)."""
        out, cache = dense_forward(self.value, state)
        return float(out[0]), cache


def select_action(dist, mode, rng=None) -> int:
    """Greedy argmax (ties to the lowest index) or an inverse-CDF sample."""
    if mode == "greedy":
        return int(np.argmax(dist))
    if mode == "sample":
        u = rng.random()
        acc = 0.0
        for idx, p in enumerate(dist):
            acc += p
            if u < acc:
                return idx
        return len(dist) - 1
    raise ValueError(f"unknown action mode: {mode!r}")
