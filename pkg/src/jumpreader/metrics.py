"""Analytic FLOP cost model and reading statistics.

Conventions, chosen to make every number auditable: a dense layer costs
2*in*out multiply-adds plus `out` bias adds, nonlinearities (relu, sigmoid,
tanh) cost 1 per element, softmax costs 3 per class (exp, accumulate, divide),
and embedding lookups are free table reads. Agent FLOPs are charged only for
decisions the agent networks actually computed, and value heads are never
evaluated at inference, so a full read without agents prices out as a vanilla
LSTM classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

from .agents import N_JUMP_ACTIONS, N_SKIP_ACTIONS, TRUNK_WIDTH, skip_input_dim

SOFTMAX_FLOPS_PER_CLASS = 3

_NONLINEAR = {"relu", "sigmoid", "tanh"}


@dataclass
class CostModel:
    embed_dim: int
    cell_size: int
    n_classes: int
    trunk_width: int = TRUNK_WIDTH

    def __post_init__(self):
        for name in ("embed_dim", "cell_size", "n_classes", "trunk_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_params(cls, params):
        return cls(embed_dim=params.embed_dim, cell_size=params.cell_size,
                   n_classes=params.n_classes,
                   trunk_width=params.skip_agent.trunk.n_out)


@dataclass
class FlopLedger:
    lstm_flops: int = 0
    skip_agent_flops: int = 0
    jump_agent_flops: int = 0
    classifier_flops: int = 0
    embedding_flops: int = 0  # lookups are table reads

    @property
    def total(self):
        return (self.lstm_flops + self.skip_agent_flops + self.jump_agent_flops
                + self.classifier_flops + self.embedding_flops)


def flops_dense(n_in, n_out, activation="linear"):
    """2*in*out mult-adds + out bias adds + out per nonlinear element."""
    if n_in <= 0 or n_out <= 0:
        raise ValueError("dense dimensions must be positive")
    if activation == "linear":
        act = 0
    elif activation in _NONLINEAR:
        act = n_out
    else:
        raise ValueError(f"unknown activation: {activation!r}")
    return 2 * n_in * n_out + n_out + act


def flops_lstm_step(model: CostModel):
    """Four gated dense layers plus the elementwise cell/output updates.

    c = f*c + i*g costs 3m (two products, one add); h = o*tanh(c) costs 2m
    (tanh plus product). Gate nonlinearities are inside flops_dense.
    """
    d, m = model.embed_dim, model.cell_size
    return 4 * flops_dense(d + m, m, "sigmoid") + 5 * m


def flops_skip_agent(model: CostModel):
    trunk_in = skip_input_dim(model.embed_dim, model.cell_size)
    return (flops_dense(trunk_in, model.trunk_width, "relu")
            + flops_dense(model.trunk_width, N_SKIP_ACTIONS)
            + SOFTMAX_FLOPS_PER_CLASS * N_SKIP_ACTIONS)


def flops_jump_agent(model: CostModel):
    return (flops_dense(model.cell_size, model.trunk_width, "relu")
            + flops_dense(model.trunk_width, N_JUMP_ACTIONS)
            + SOFTMAX_FLOPS_PER_CLASS * N_JUMP_ACTIONS)


def flops_classifier(model: CostModel):
    m = model.cell_size
    return flops_dense(m, m, "relu") + flops_dense(m, model.n_classes)


def episode_flops(trajectory, model: CostModel) -> FlopLedger:
    """Exact operation count for one reading episode.

    Every token the skip agent looked at costs one skip-agent evaluation; every
    read additionally costs one LSTM step and one jump-agent evaluation;
    jumped-over tokens cost nothing. Steps whose distributions were never
    computed (agent override) carry no agent cost.
    """
    skip_evals = sum(1 for s in trajectory.steps if s.skip_dist is not None)
    jump_evals = sum(1 for s in trajectory.steps if s.jump_dist is not None)
    return FlopLedger(
        lstm_flops=trajectory.tokens_read * flops_lstm_step(model),
        skip_agent_flops=skip_evals * flops_skip_agent(model),
        jump_agent_flops=jump_evals * flops_jump_agent(model),
        classifier_flops=flops_classifier(model),
    )


def full_read_flops(doc_len, model: CostModel) -> FlopLedger:
    """Vanilla full-read reference: every token through the LSTM, no agents."""
    if doc_len < 1:
        raise ValueError("document length must be at least 1")
    return FlopLedger(lstm_flops=doc_len * flops_lstm_step(model),
                      classifier_flops=flops_classifier(model))


def flop_reduction(full_total, speed_total) -> float:
    """Ratio of full-read to speed-read operation counts."""
    if speed_total <= 0:
        raise ValueError("speed-read FLOP total must be positive")
    return full_total / speed_total


def format_flop_reduction(ratio) -> str:
    return f"{ratio:.1f}x"


def reading_stats(trajectory):
    """(jump%, read%, skip%) of the document's tokens; the three sum to 100."""
    n = trajectory.doc_len
    return (trajectory.tokens_jumped * 100.0 / n,
            trajectory.tokens_read * 100.0 / n,
            trajectory.tokens_skipped * 100.0 / n)
