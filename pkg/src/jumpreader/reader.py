"""Sequential reading engine: one episode walks a document under the skip and
jump agents, maintaining LSTM state, and ends in a classification.

Per loop iteration at position i: the token is embedded and the skip agent
decides. A skip leaves the LSTM state untouched and moves to i+1; a read
updates the LSTM, after which the jump agent picks the resume position from
the document's jump table (jumping to the end terminates the episode). The
classifier head runs on the final LSTM output.

The position strictly increases every iteration, so an episode always
terminates within len(doc) iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agents import JumpAction, SkipAction, encode_prev_actions, select_action
from .corpus import Document
from .model import ModelParams
from .nncore import dense_forward, dropout_mask, lstm_step

FORCE_READ = "force_read"


@dataclass
class StepRecord:
    """One skip-agent decision, plus the jump decision when the word was read.

    Distribution/log-prob/value fields are None when the corresponding network
    was not evaluated (agent override, or value heads outside training).
    reward and ret are filled in by the trainer.
    """

    position: int
    skip_action: int
    skip_dist: np.ndarray | None = None
    skip_logprob: float | None = None
    skip_value: float | None = None
    jump_action: int | None = None
    jump_dist: np.ndarray | None = None
    jump_logprob: float | None = None
    jump_value: float | None = None
    reward: float = 0.0
    ret: float = 0.0
    # advantages R - V frozen at reward time; gradients never flow through them
    skip_advantage: float | None = None
    jump_advantage: float | None = None


@dataclass
class Trajectory:
    steps: list[StepRecord]
    tokens_read: int
    tokens_skipped: int
    tokens_jumped: int
    terminal_logits: np.ndarray
    doc_len: int
    caches: dict | None = field(default=None, repr=False)

    def actions(self):
        """(skip, jump) pairs suitable for replaying the episode."""
        return [(s.skip_action, s.jump_action) for s in self.steps]


def read_document(params: ModelParams, doc: Document, mode="greedy", rng=None,
                  agent_override=None, training=False, dropout_embed=0.0,
                  dropout_output=0.0, collect_values=None, keep_caches=None,
                  script=None):
    """Run one reading episode; returns (logits, Trajectory).

    mode selects greedy or sampled actions. agent_override=FORCE_READ reads
    every token and advances word by word without evaluating the agents (the
    plain-LSTM code path, with no agent cost recorded). script replays a fixed
    action sequence while still evaluating the agents, which keeps the loss
    differentiable with the actions held constant.

    In training mode dropout is applied to the embedded input and to the final
    LSTM output, value heads are evaluated, and per-step caches for the
    backward pass are kept on the trajectory.
    """
    if len(doc) == 0:
        raise ValueError("cannot read an empty document")
    if collect_values is None:
        collect_values = training
    if keep_caches is None:
        keep_caches = training

    emb = params.embedding.matrix
    cell = params.lstm
    skip_agent = params.skip_agent
    jump_agent = params.jump_agent
    m = cell.m
    n = len(doc)
    jump_table = doc.jump_table
    forced = agent_override == FORCE_READ

    o = np.zeros(m)
    c = np.zeros(m)
    prev_skip = None
    prev_jump = None
    pos = 0
    step_idx = 0
    read = skipped = jumped = 0
    steps = []
    step_caches = [] if keep_caches else None

    while pos < n:
        token = doc.tokens[pos]
        x = emb[token.id]
        emask = None
        if training and dropout_embed > 0.0:
            emask = dropout_mask(x.shape, dropout_embed, rng)
            x = x * emask

        cache = {"token_id": token.id, "emask": emask} if keep_caches else None
        record = StepRecord(position=pos, skip_action=int(SkipAction.READ))

        if forced:
            skip_action = int(SkipAction.READ)
        else:
            z = np.concatenate([x, o, encode_prev_actions(prev_skip, prev_jump)])
            s_state, s_trunk_cache = skip_agent.trunk_forward(z)
            s_dist, s_pol_cache = skip_agent.policy_forward(s_state)
            if script is not None:
                skip_action = script[step_idx][0]
            else:
                skip_action = select_action(s_dist, mode, rng)
            record.skip_action = skip_action
            record.skip_dist = s_dist
            record.skip_logprob = float(np.log(max(s_dist[skip_action], 1e-300)))
            if collect_values:
                s_value, s_val_cache = skip_agent.value_forward(s_state)
                record.skip_value = s_value
            if keep_caches:
                cache["skip_trunk"] = s_trunk_cache
                cache["skip_state"] = s_state
                cache["skip_pol"] = s_pol_cache
                if collect_values:
                    cache["skip_val"] = s_val_cache

        if skip_action == SkipAction.SKIP:
            skipped += 1
            pos += 1
            prev_skip = SkipAction.SKIP
            prev_jump = None  # no jump decision follows a skip
        else:
            o, c, lstm_cache = lstm_step(cell, x, o, c)
            read += 1
            if keep_caches:
                cache["lstm"] = lstm_cache
            if forced:
                jump_action = int(JumpAction.NEXT_WORD)
            else:
                j_state, j_trunk_cache = jump_agent.trunk_forward(o)
                j_dist, j_pol_cache = jump_agent.policy_forward(j_state)
                if script is not None:
                    jump_action = script[step_idx][1]
                else:
                    jump_action = select_action(j_dist, mode, rng)
                record.jump_dist = j_dist
                record.jump_logprob = float(np.log(max(j_dist[jump_action], 1e-300)))
                if collect_values:
                    j_value, j_val_cache = jump_agent.value_forward(j_state)
                    record.jump_value = j_value
                if keep_caches:
                    cache["jump_trunk"] = j_trunk_cache
                    cache["jump_state"] = j_state
                    cache["jump_pol"] = j_pol_cache
                    if collect_values:
                        cache["jump_val"] = j_val_cache
            record.jump_action = jump_action
            target = int(jump_table[pos, jump_action])
            jumped += target - pos - 1
            pos = target
            prev_skip = SkipAction.READ
            prev_jump = jump_action

        steps.append(record)
        if keep_caches:
            step_caches.append(cache)
        step_idx += 1

    final_out = o
    omask = None
    if training and dropout_output > 0.0:
        omask = dropout_mask(final_out.shape, dropout_output, rng)
        final_out = final_out * omask
    hidden, hid_cache = dense_forward(params.classifier.hidden, final_out)
    logits, out_cache = dense_forward(params.classifier.out, hidden)

    caches = None
    if keep_caches:
        caches = {"steps": step_caches, "omask": omask,
                  "hidden": hid_cache, "out": out_cache}
    traj = Trajectory(steps=steps, tokens_read=read, tokens_skipped=skipped,
                      tokens_jumped=jumped, terminal_logits=logits, doc_len=n,
                      caches=caches)
    return logits, traj


def predict(logits) -> int:
    """Class index: argmax with ties broken toward the lowest index."""
    return int(np.argmax(logits))


def trace(params: ModelParams, doc: Document, force_read=False) -> str:
    """Annotated greedy read: skipped tokens as ~w~, jumped spans as [[ ... ]]."""
    override = FORCE_READ if force_read else None
    _, traj = read_document(params, doc, mode="greedy", agent_override=override)
    parts = []
    for step in traj.steps:
        token = doc.tokens[step.position]
        if step.skip_action == SkipAction.SKIP:
            parts.append(f"~{token.surface}~")
            continue
        parts.append(token.surface)
        target = int(doc.jump_table[step.position, step.jump_action])
        if target > step.position + 1:
            span = " ".join(t.surface for t in doc.tokens[step.position + 1:target])
            parts.append(f"[[{span}]]")
    return " ".join(parts)
