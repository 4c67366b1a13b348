"""Two-phase optimization with advantage actor-critic.

Phase 1 trains LSTM + classifier supervised, with every token force-read.
Phase 2 warm-starts the agent policy heads to near-certain read/next-word
behaviour, freezes the embeddings, and trains everything jointly: sampled
episodes are rolled out, per-step rewards and returns are filled in, and the
total loss (classification + scaled actor + critic + entropy-to-target) is
backpropagated by hand through the episode, treating sampled actions, returns
and advantages as constants.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .agents import JumpAction, N_JUMP_ACTIONS, N_SKIP_ACTIONS, SkipAction
from .metrics import CostModel, episode_flops, flop_reduction, full_read_flops
from .model import ModelParams
from .nncore import (
    Gradients,
    RmsProp,
    clip_gradients,
    dense_backward,
    lstm_step_backward,
    softmax,
)
from .reader import FORCE_READ, Trajectory, predict, read_document

WARM_START_BIAS = 4.6  # puts ~0.99 on Read and ~0.97 on NextWord initially

_PRETRAIN_PHASE = 1
_SPEEDREAD_PHASE = 2


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults follow the reference configuration."""

    lr: float = 0.0005
    batch_size: int = 32
    dropout_embed: float = 0.1
    dropout_output: float = 0.1
    cell_size: int = 128
    embed_dim: int = 100
    trunk_width: int = 25
    clip: float = 0.1
    c_skip: float = 0.5
    w_rolling: float = 0.1
    entropy_weight: float = 0.1
    alpha: float = 1.0
    beta: float = 10.0
    gamma: float = 1.0
    action_mode: str = "greedy"  # evaluation-time action selection
    entropy_target: str = "uniform"
    pretrain_epochs: int = 3
    speedread_epochs: int = 3
    seed: int = 0

    def validate(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        for name in ("dropout_embed", "dropout_output"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        for name in ("cell_size", "embed_dim", "trunk_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.clip <= 0:
            raise ValueError("clip must be positive")
        if not 0.0 < self.c_skip <= 1.0:
            raise ValueError("c_skip must be in (0, 1]")
        for name in ("w_rolling", "entropy_weight", "alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.action_mode not in ("greedy", "sample"):
            raise ValueError("action_mode must be 'greedy' or 'sample'")
        if self.entropy_target not in ("uniform", "read95"):
            raise ValueError("entropy_target must be 'uniform' or 'read95'")
        for name in ("pretrain_epochs", "speedread_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        return self


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def parse_config(path) -> TrainConfig:
    """Read a flat `key = value` config file. Unknown keys are errors."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected `key = value`")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}: line {lineno}: unknown config key {key!r}")
            kind = _FIELD_TYPES[key]
            try:
                if kind in ("int", int):
                    values[key] = int(raw)
                elif kind in ("float", float):
                    values[key] = float(raw)
                else:
                    values[key] = raw
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: bad value for {key}: {raw!r}") from exc
    return TrainConfig(**values).validate()


def episode_rng(seed, *stream):
    """Deterministic per-example generator derived from (seed, stream ids)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, stream)])


# ---------------------------------------------------------------------------
# rewards, returns, losses


def step_reward(action, doc_len, c_skip=0.5):
    """Reading costs 1/|doc|, skipping c_skip/|doc|; jumps carry no reward."""
    if doc_len < 1:
        raise ValueError("doc_len must be at least 1")
    if action == SkipAction.READ:
        return -1.0 / doc_len
    return -c_skip / doc_len


def terminal_bonus(prediction, target, p_target):
    """1 for a correct prediction, else the model's probability of the target."""
    if not 0.0 <= p_target <= 1.0:
        raise ValueError("p_target must be in [0, 1]")
    return 1.0 if prediction == target else p_target


def returns(rewards, prediction, target, p_target, w_rolling):
    """R_t = terminal bonus + w_rolling * (suffix sum of rewards from t)."""
    bonus = terminal_bonus(prediction, target, p_target)
    out = []
    suffix = 0.0
    for r in reversed(rewards):
        suffix += r
        out.append(bonus + w_rolling * suffix)
    out.reverse()
    return out


def add_rewards(traj: Trajectory, target, config: TrainConfig) -> Trajectory:
    """Fill per-step rewards and returns from the episode outcome."""
    for s in traj.steps:
        s.reward = step_reward(s.skip_action, traj.doc_len, config.c_skip)
    probs = softmax(traj.terminal_logits)
    rets = returns([s.reward for s in traj.steps], predict(traj.terminal_logits),
                   target, float(probs[target]), config.w_rolling)
    for s, r in zip(traj.steps, rets):
        s.ret = r
        if s.skip_value is not None:
            s.skip_advantage = r - s.skip_value
        if s.jump_value is not None:
            s.jump_advantage = r - s.jump_value
    return traj


def entropy_targets(kind):
    """Per-agent target distributions for the exploration loss."""
    if kind == "uniform":
        return (np.full(N_SKIP_ACTIONS, 1.0 / N_SKIP_ACTIONS),
                np.full(N_JUMP_ACTIONS, 1.0 / N_JUMP_ACTIONS))
    if kind == "read95":
        skip = np.full(N_SKIP_ACTIONS, 0.05 / (N_SKIP_ACTIONS - 1))
        skip[SkipAction.READ] = 0.95
        jump = np.full(N_JUMP_ACTIONS, 0.05 / (N_JUMP_ACTIONS - 1))
        jump[JumpAction.NEXT_WORD] = 0.95
        return skip, jump
    raise ValueError(f"unknown entropy target: {kind!r}")


def class_loss(logits, target):
    """Cross entropy of the classifier softmax against the gold class."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    return float(np.log(np.sum(np.exp(z))) - z[target])


def actor_loss(traj: Trajectory):
    """Policy-gradient surrogate: -log pi(a) * (R - V), advantages constant."""
    total = 0.0
    for s in traj.steps:
        if s.skip_dist is not None:
            total -= s.skip_logprob * s.skip_advantage
        if s.jump_dist is not None:
            total -= s.jump_logprob * s.jump_advantage
    return total


def critic_loss(traj: Trajectory):
    """Squared error of every value estimate against its observed return."""
    total = 0.0
    for s in traj.steps:
        if s.skip_value is not None:
            total += (s.skip_value - s.ret) ** 2
        if s.jump_value is not None:
            total += (s.jump_value - s.ret) ** 2
    return total


def entropy_loss(traj: Trajectory, skip_target, jump_target):
    """Cross entropy of each decision distribution against its target."""
    total = 0.0
    for s in traj.steps:
        if s.skip_dist is not None:
            total -= float(skip_target @ np.log(np.maximum(s.skip_dist, 1e-300)))
        if s.jump_dist is not None:
            total -= float(jump_target @ np.log(np.maximum(s.jump_dist, 1e-300)))
    return total


def total_loss(class_l, actor_l, critic_l, entropy_l, config: TrainConfig):
    return (config.alpha * class_l + config.beta * actor_l
            + config.gamma * critic_l + config.entropy_weight * entropy_l)


@dataclass
class LossBreakdown:
    classification: float
    actor: float
    critic: float
    entropy: float
    total: float


def episode_losses(traj: Trajectory, target, config: TrainConfig) -> LossBreakdown:
    """All loss components of one rewarded episode."""
    skip_t, jump_t = entropy_targets(config.entropy_target)
    c = class_loss(traj.terminal_logits, target)
    a = actor_loss(traj)
    v = critic_loss(traj)
    e = entropy_loss(traj, skip_t, jump_t)
    return LossBreakdown(c, a, v, e, total_loss(c, a, v, e, config))


# ---------------------------------------------------------------------------
# backward pass


def _onehot(idx, n):
    v = np.zeros(n)
    v[idx] = 1.0
    return v


def episode_backward(params: ModelParams, traj: Trajectory, target,
                     config: TrainConfig, grads: Gradients):
    """Accumulate gradients of the episode's total loss into `grads`.

    Requires a trajectory rolled out with caches (and value estimates when any
    agent was consulted). Sampled actions, returns, and advantages are
    constants; gradients flow through log-probabilities, value estimates,
    entropy terms, and the classification head, then back through the LSTM
    chain into the token embeddings.
    """
    caches = traj.caches
    if caches is None:
        raise ValueError("trajectory was rolled out without caches")
    cell = params.lstm
    skip_agent = params.skip_agent
    jump_agent = params.jump_agent
    embed_train = params.embedding.trainable
    skip_tgt, jump_tgt = entropy_targets(config.entropy_target)
    alpha, beta, gamma, delta = (config.alpha, config.beta, config.gamma,
                                 config.entropy_weight)
    d = params.embed_dim

    # classifier head
    probs = softmax(traj.terminal_logits)
    dlogits = alpha * (probs - _onehot(target, params.n_classes))
    dhidden, dw, db = dense_backward(params.classifier.out, caches["out"], dlogits)
    grads.add("classifier.out.w", dw)
    grads.add("classifier.out.b", db)
    dfinal, dw, db = dense_backward(params.classifier.hidden, caches["hidden"], dhidden)
    grads.add("classifier.hidden.w", dw)
    grads.add("classifier.hidden.b", db)
    if caches["omask"] is not None:
        dfinal = dfinal * caches["omask"]

    d_o = dfinal
    d_c = np.zeros(cell.m)

    for step, cache in zip(reversed(traj.steps), reversed(caches["steps"])):
        is_read = step.skip_action == SkipAction.READ

        if step.jump_dist is not None:
            advantage = step.jump_advantage
            if advantage is None:
                advantage = step.ret - step.jump_value
            dlj = (beta * advantage * (step.jump_dist - _onehot(step.jump_action, N_JUMP_ACTIONS))
                   + delta * (step.jump_dist - jump_tgt))
            dstate, dw, db = dense_backward(jump_agent.policy, cache["jump_pol"], dlj)
            grads.add("jump.policy.w", dw)
            grads.add("jump.policy.b", db)
            dval = np.array([2.0 * gamma * (step.jump_value - step.ret)])
            dstate_v, dw, db = dense_backward(jump_agent.value, cache["jump_val"], dval)
            grads.add("jump.value.w", dw)
            grads.add("jump.value.b", db)
            d_o_extra, dw, db = dense_backward(
                jump_agent.trunk, cache["jump_trunk"], dstate + dstate_v)
            grads.add("jump.trunk.w", dw)
            grads.add("jump.trunk.b", db)
            d_o = d_o + d_o_extra

        if is_read:
            dx, d_o, d_c, dw, db = lstm_step_backward(cell, cache["lstm"], d_o, d_c)
            grads.add("lstm.w", dw)
            grads.add("lstm.b", db)
        else:
            dx = np.zeros(d)  # a skipped word reaches the loss only via the skip agent

        if step.skip_dist is not None:
            advantage = step.skip_advantage
            if advantage is None:
                advantage = step.ret - step.skip_value
            dls = (beta * advantage * (step.skip_dist - _onehot(step.skip_action, N_SKIP_ACTIONS))
                   + delta * (step.skip_dist - skip_tgt))
            dstate, dw, db = dense_backward(skip_agent.policy, cache["skip_pol"], dls)
            grads.add("skip.policy.w", dw)
            grads.add("skip.policy.b", db)
            dval = np.array([2.0 * gamma * (step.skip_value - step.ret)])
            dstate_v, dw, db = dense_backward(skip_agent.value, cache["skip_val"], dval)
            grads.add("skip.value.w", dw)
            grads.add("skip.value.b", db)
            dz, dw, db = dense_backward(
                skip_agent.trunk, cache["skip_trunk"], dstate + dstate_v)
            grads.add("skip.trunk.w", dw)
            grads.add("skip.trunk.b", db)
            dx = dx + dz[:d]
            d_o = d_o + dz[d:d + cell.m]

        if embed_train:
            if cache["emask"] is not None:
                dx = dx * cache["emask"]
            grads.data["embedding"][cache["token_id"]] += dx


def replay_losses(params: ModelParams, doc, ref_traj: Trajectory, target,
                  config: TrainConfig) -> float:
    """Total episode loss under `params` with the reference episode's actions
    and returns held fixed; used by finite-difference gradient checks."""
    _, traj = read_document(params, doc, script=ref_traj.actions(),
                            collect_values=True, keep_caches=False)
    for s, ref in zip(traj.steps, ref_traj.steps):
        s.ret = ref.ret
        s.skip_advantage = ref.skip_advantage
        s.jump_advantage = ref.jump_advantage
    losses = episode_losses(traj, target, config)
    return losses.total


# ---------------------------------------------------------------------------
# phases


def warm_start_agents(params: ModelParams, bias=WARM_START_BIAS):
    """Zero the policy-head weights and bias toward Read / NextWord so the
    speed-read phase starts out reading essentially everything."""
    for agent, idx in ((params.skip_agent, int(SkipAction.READ)),
                      (params.jump_agent, int(JumpAction.NEXT_WORD))):
        agent.policy.w[:] = 0.0
        agent.policy.b[:] = 0.0
        agent.policy.b[idx] = bias
    return params


@dataclass
class EpochStats:
    epoch: int
    val_accuracy: float
    val_read_pct: float
    val_jump_pct: float


@dataclass
class EvalResult:
    accuracy: float
    jump_pct: float
    read_pct: float
    skip_pct: float
    flops_full: int
    flops_speed: int
    flop_ratio: float
    predictions: list
    n_examples: int


def evaluate_split(params: ModelParams, docs, mode="greedy", force_read=False,
                   seed=0, max_workers=1) -> EvalResult:
    """Greedy/sampled evaluation over a document split with FLOP accounting.

    Episodes are independent; each draws its generator from (seed, example
    index), so results do not depend on worker count.
    """
    if not docs:
        raise ValueError("cannot evaluate an empty split")
    cost = CostModel.from_params(params)
    override = FORCE_READ if force_read else None

    def run(idx):
        doc = docs[idx]
        rng = episode_rng(seed, idx)
        logits, traj = read_document(params, doc, mode=mode, rng=rng,
                                     agent_override=override)
        return predict(logits), traj

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run, range(len(docs))))
    else:
        results = [run(i) for i in range(len(docs))]

    correct = 0
    read = skipped = jumped = total_tokens = 0
    flops_speed = flops_full = 0
    predictions = []
    for doc, (pred, traj) in zip(docs, results):
        predictions.append((pred, doc.label))
        correct += int(pred == doc.label)
        read += traj.tokens_read
        skipped += traj.tokens_skipped
        jumped += traj.tokens_jumped
        total_tokens += traj.doc_len
        flops_speed += episode_flops(traj, cost).total
        flops_full += full_read_flops(traj.doc_len, cost).total
    return EvalResult(
        accuracy=correct / len(docs),
        jump_pct=jumped * 100.0 / total_tokens,
        read_pct=read * 100.0 / total_tokens,
        skip_pct=skipped * 100.0 / total_tokens,
        flops_full=flops_full,
        flops_speed=flops_speed,
        flop_ratio=flop_reduction(flops_full, flops_speed),
        predictions=predictions,
        n_examples=len(docs),
    )


def _batches(order, batch_size):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def _train_epochs(params, train_docs, val_docs, config, phase, epochs,
                  force_read, log=None, track_best=False):
    """Shared batch loop for both phases; returns (params, history).

    With track_best the best-validation-accuracy clone is returned, otherwise
    the final parameters.
    """
    if not train_docs:
        raise ValueError("training set is empty")
    config.validate()
    tensors = params.tensors()
    frozen = set(tensors) - params.trainable_names()
    opt = RmsProp(config.lr)
    grads = Gradients(tensors)
    best = None
    best_acc = -1.0
    history = []

    for epoch in range(1, epochs + 1):
        order = episode_rng(config.seed, phase, 0, epoch).permutation(len(train_docs))
        for batch_no, batch in enumerate(_batches(order, config.batch_size), start=1):
            grads.zero()
            loss_sum = 0.0
            correct = 0
            read = skipped = jumped = tokens = 0
            for doc_idx in batch:
                doc = train_docs[doc_idx]
                rng = episode_rng(config.seed, phase, epoch, doc_idx)
                logits, traj = read_document(
                    params, doc, mode="sample", rng=rng,
                    agent_override=FORCE_READ if force_read else None,
                    training=True, dropout_embed=config.dropout_embed,
                    dropout_output=config.dropout_output)
                add_rewards(traj, doc.label, config)
                losses = episode_losses(traj, doc.label, config)
                episode_backward(params, traj, doc.label, config, grads)
                loss_sum += losses.total
                correct += int(predict(logits) == doc.label)
                read += traj.tokens_read
                skipped += traj.tokens_skipped
                jumped += traj.tokens_jumped
                tokens += traj.doc_len
            grads.scale(1.0 / len(batch))
            clip_gradients(grads, config.clip)
            opt.update(tensors, grads, frozen=frozen)
            if log is not None:
                log.write(f"{epoch}\t{batch_no}\t{loss_sum / len(batch):.6f}"
                          f"\t{correct / len(batch):.4f}"
                          f"\t{read * 100.0 / tokens:.1f}"
                          f"\t{jumped * 100.0 / tokens:.1f}\n")

        if val_docs:
            val = evaluate_split(params, val_docs, mode=config.action_mode,
                                 force_read=force_read, seed=config.seed)
            history.append(EpochStats(epoch, val.accuracy, val.read_pct, val.jump_pct))
            if track_best and val.accuracy > best_acc:
                best_acc = val.accuracy
                best = params.clone()

    if track_best and best is not None:
        return best, history
    return params, history


def pretrain(params: ModelParams, train_docs, val_docs, config: TrainConfig,
             log=None):
    """Phase 1: supervised training with every token force-read.

    Embeddings train (unless the table is marked frozen); the checkpoint with
    the best validation accuracy is returned along with per-epoch stats.
    """
    return _train_epochs(params, train_docs, val_docs, config,
                         phase=_PRETRAIN_PHASE, epochs=config.pretrain_epochs,
                         force_read=True, log=log, track_best=True)


def speedread_train(params: ModelParams, train_docs, val_docs,
                    config: TrainConfig, log=None):
    """Phase 2: activate the agents and train jointly with sampled actions.

    Policy heads are warm-started to read-everything behaviour and embeddings
    are frozen. Returns the final parameters and per-epoch validation stats.
    """
    warm_start_agents(params)
    params.embedding.trainable = False
    return _train_epochs(params, train_docs, val_docs, config,
                         phase=_SPEEDREAD_PHASE, epochs=config.speedread_epochs,
                         force_read=False, log=log, track_best=False)
