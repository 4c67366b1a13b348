import io
import math

import numpy as np
import pytest

from conftest import docs_from_texts, easy_rows, make_toy_model, random_token_text

from jumpreader.agents import JumpAction, SkipAction
from jumpreader.corpus import Document, Vocabulary, random_embeddings, tokenize
from jumpreader.model import ModelParams
from jumpreader.nncore import Gradients, dense_backward, lstm_step_backward, softmax
from jumpreader.reader import FORCE_READ, StepRecord, Trajectory, read_document
from jumpreader.synthetic import generate_keyword_docs
from jumpreader.trainer import (
    TrainConfig,
    actor_loss,
    add_rewards,
    class_loss,
    critic_loss,
    entropy_loss,
    entropy_targets,
    episode_backward,
    episode_losses,
    episode_rng,
    evaluate_split,
    parse_config,
    pretrain,
    returns,
    speedread_train,
    step_reward,
    terminal_bonus,
    total_loss,
    warm_start_agents,
)


class TestStepReward:
    def test_read_cost(self):
        assert step_reward(SkipAction.READ, 10) == -0.1

    def test_skip_costs_half(self):
        assert step_reward(SkipAction.SKIP, 10, c_skip=0.5) == -0.05

    def test_single_token_doc(self):
        assert step_reward(SkipAction.READ, 1) == -1.0

    def test_bad_length(self):
        with pytest.raises(ValueError):
            step_reward(SkipAction.READ, 0)


class TestReturns:
    def test_full_read_first_return(self):
        for n in (1, 3, 10, 49):
            rewards = [step_reward(SkipAction.READ, n)] * n
            rets = returns(rewards, prediction=1, target=1, p_target=0.9,
                           w_rolling=0.1)
            assert abs(rets[0] - (1.0 - 0.1)) < 1e-9

    def test_wrong_prediction_bonus_is_target_probability(self):
        assert terminal_bonus(prediction=0, target=1, p_target=0.3) == 0.3
        assert returns([], 0, 1, 0.3, 0.1) == []

    def test_last_step_base_case(self):
        rets = returns([-0.25], prediction=1, target=1, p_target=0.5,
                       w_rolling=0.2)
        assert abs(rets[-1] - (1.0 + 0.2 * -0.25)) < 1e-12

    def test_invalid_p_target(self):
        with pytest.raises(ValueError):
            returns([-1.0], 0, 1, 1.5, 0.1)

    def test_matches_brute_force_suffix_sums(self):
        # independent oracle: direct per-position summation
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 9))
            rewards = list(rng.uniform(-1, 0, n))
            bonus_case = rng.random() < 0.5
            pred, tgt = (1, 1) if bonus_case else (0, 1)
            p = float(rng.uniform(0, 1))
            w = float(rng.uniform(0, 0.3))
            rets = returns(rewards, pred, tgt, p, w)
            bonus = 1.0 if bonus_case else p
            expected = [bonus + w * sum(rewards[t:]) for t in range(n)]
            assert np.allclose(rets, expected, atol=1e-9)

    def test_recursion_telescopes(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(2, 9))
            rewards = list(rng.uniform(-1, 0, n))
            w = 0.15
            rets = returns(rewards, 1, 1, 0.5, w)
            for t in range(n - 1):
                assert abs((rets[t] - rets[t + 1]) - w * rewards[t]) < 1e-12

    def test_full_read_reward_sum_is_minus_one(self):
        docs, vocab = docs_from_texts(["a b , c d . e f g !", "q w e r t y ."])
        params = make_toy_model(0, len(vocab))
        cfg = TrainConfig(cell_size=6, embed_dim=4, trunk_width=3)
        for doc in docs:
            _, traj = read_document(params, doc, agent_override=FORCE_READ,
                                    keep_caches=True)
            add_rewards(traj, doc.label, cfg)
            assert abs(math.fsum(s.reward for s in traj.steps) + 1.0) < 1e-9


def one_step_record(dist, action, value, ret):
    rec = StepRecord(position=0, skip_action=action,
                     skip_dist=np.asarray(dist, dtype=float),
                     skip_logprob=float(np.log(dist[action])),
                     skip_value=value, ret=ret)
    rec.skip_advantage = ret - value
    return rec


class TestLosses:
    def test_actor_zero_advantage(self):
        traj = Trajectory(steps=[one_step_record([0.5, 0.5], 0, 1.0, 1.0)],
                          tokens_read=0, tokens_skipped=1, tokens_jumped=0,
                          terminal_logits=np.zeros(2), doc_len=1)
        assert actor_loss(traj) == 0.0

    def test_actor_single_step_analytic(self):
        traj = Trajectory(steps=[one_step_record([0.5, 0.5], 0, 0.0, 1.0)],
                          tokens_read=0, tokens_skipped=1, tokens_jumped=0,
                          terminal_logits=np.zeros(2), doc_len=1)
        assert abs(actor_loss(traj) - 0.6931471805599453) < 1e-12

    def test_critic_exact_values(self):
        traj = Trajectory(steps=[one_step_record([0.5, 0.5], 0, 0.7, 0.7)],
                          tokens_read=0, tokens_skipped=1, tokens_jumped=0,
                          terminal_logits=np.zeros(2), doc_len=1)
        assert critic_loss(traj) == 0.0
        traj.steps[0].skip_value = 0.0
        traj.steps[0].ret = 1.0
        assert critic_loss(traj) == 1.0

    def test_entropy_uniform_policy_hits_minimum(self):
        skip_t, jump_t = entropy_targets("uniform")
        traj = Trajectory(steps=[one_step_record([0.5, 0.5], 0, 0.0, 0.0)],
                          tokens_read=0, tokens_skipped=1, tokens_jumped=0,
                          terminal_logits=np.zeros(2), doc_len=1)
        assert abs(entropy_loss(traj, skip_t, jump_t) - math.log(2)) < 1e-12
        # any other distribution is strictly worse (Gibbs)
        for p in (0.6, 0.9, 0.99):
            traj.steps[0].skip_dist = np.array([p, 1 - p])
            assert entropy_loss(traj, skip_t, jump_t) > math.log(2)

    def test_entropy_targets_read95(self):
        skip_t, jump_t = entropy_targets("read95")
        assert skip_t[int(SkipAction.READ)] == 0.95
        assert skip_t[int(SkipAction.SKIP)] == 0.05
        assert jump_t[int(JumpAction.NEXT_WORD)] == 0.95
        assert np.allclose(jump_t[1:], 0.05 / 3)
        assert abs(skip_t.sum() - 1) < 1e-12 and abs(jump_t.sum() - 1) < 1e-12

    def test_class_loss_uniform(self):
        assert abs(class_loss(np.zeros(2), 0) - math.log(2)) < 1e-12

    def test_class_loss_confident(self):
        assert class_loss(np.array([30.0, 0.0]), 0) < 1e-12

    def test_class_loss_matches_terminal_bonus_probability(self):
        logits = np.array([0.3, -1.2, 2.0])
        for target in range(3):
            assert abs(class_loss(logits, target)
                       - (-math.log(softmax(logits)[target]))) < 1e-12

    def test_total_loss_weighting(self):
        cfg = TrainConfig(alpha=1.0, beta=10.0, gamma=1.0, entropy_weight=0.1)
        value = total_loss(1.0, 0.2, 0.5, math.log(2), cfg)
        assert abs(value - 3.5693147180559945) < 1e-12
        assert total_loss(0, 0, 0, 0, cfg) == 0.0

    def test_zero_rl_weights_reduce_to_supervised(self):
        cfg = TrainConfig(beta=0.0, gamma=0.0, entropy_weight=0.0)
        docs, vocab = docs_from_texts(["a b c ."])
        params = make_toy_model(1, len(vocab))
        _, traj = read_document(params, docs[0], mode="sample",
                                rng=episode_rng(0, 1), collect_values=True,
                                keep_caches=True)
        add_rewards(traj, docs[0].label, cfg)
        losses = episode_losses(traj, docs[0].label, cfg)
        assert losses.total == losses.classification


class TestGradientFlow:
    def _rollout(self, seed=0, text="a b , c d ."):
        docs, vocab = docs_from_texts([text])
        params = make_toy_model(seed, len(vocab))
        cfg = TrainConfig(cell_size=6, embed_dim=4, trunk_width=3)
        _, traj = read_document(params, docs[0], mode="sample",
                                rng=episode_rng(seed, 7), collect_values=True,
                                keep_caches=True)
        add_rewards(traj, docs[0].label, cfg)
        return params, docs[0], traj, cfg

    def test_critic_only_leaves_policy_heads_untouched(self):
        params, doc, traj, _ = self._rollout()
        cfg = TrainConfig(alpha=0.0, beta=0.0, gamma=1.0, entropy_weight=0.0,
                          cell_size=6, embed_dim=4, trunk_width=3)
        grads = Gradients(params.tensors())
        episode_backward(params, traj, doc.label, cfg, grads)
        assert not grads["skip.policy.w"].any()
        assert not grads["skip.policy.b"].any()
        assert not grads["jump.policy.w"].any()
        assert not grads["jump.policy.b"].any()

    def test_actor_only_leaves_value_heads_untouched(self):
        params, doc, traj, _ = self._rollout(seed=1)
        cfg = TrainConfig(alpha=0.0, beta=1.0, gamma=0.0, entropy_weight=0.0,
                          cell_size=6, embed_dim=4, trunk_width=3)
        grads = Gradients(params.tensors())
        episode_backward(params, traj, doc.label, cfg, grads)
        assert not grads["skip.value.w"].any()
        assert not grads["skip.value.b"].any()
        assert not grads["jump.value.w"].any()
        assert not grads["jump.value.b"].any()

    def test_perturbing_advantage_keeps_critic_gradients(self):
        params, doc, traj, _ = self._rollout(seed=2)
        cfg = TrainConfig(alpha=0.0, beta=0.0, gamma=1.0, entropy_weight=0.0,
                          cell_size=6, embed_dim=4, trunk_width=3)
        grads_a = Gradients(params.tensors())
        episode_backward(params, traj, doc.label, cfg, grads_a)
        for s in traj.steps:
            if s.skip_advantage is not None:
                s.skip_advantage += 5.0
            if s.jump_advantage is not None:
                s.jump_advantage += 5.0
        grads_b = Gradients(params.tensors())
        episode_backward(params, traj, doc.label, cfg, grads_b)
        for name, g in grads_a.items():
            assert np.array_equal(g, grads_b[name])

    def test_positive_advantage_update_raises_action_logprob(self):
        params, doc, traj, _ = self._rollout(seed=3)
        cfg = TrainConfig(alpha=0.0, beta=1.0, gamma=0.0, entropy_weight=0.0,
                          cell_size=6, embed_dim=4, trunk_width=3)
        for s in traj.steps:
            if s.skip_advantage is not None:
                s.skip_advantage = 1.0
            if s.jump_advantage is not None:
                s.jump_advantage = 1.0
        grads = Gradients(params.tensors())
        episode_backward(params, traj, doc.label, cfg, grads)

        def scripted_logprob_sum():
            _, replay = read_document(params, doc, script=traj.actions())
            total = 0.0
            for s in replay.steps:
                total += s.skip_logprob
                if s.jump_logprob is not None:
                    total += s.jump_logprob
            return total

        before = scripted_logprob_sum()
        for name, arr in params.tensors().items():
            arr -= 1e-4 * grads[name]
        after = scripted_logprob_sum()
        assert after > before

    def test_entropy_pulls_confident_policy_toward_uniform(self):
        docs, vocab = docs_from_texts(["a"])
        params = make_toy_model(4, len(vocab))
        warm_start_agents(params)  # P(read) ~ 0.99
        cfg = TrainConfig(alpha=0.0, beta=0.0, gamma=0.0, entropy_weight=1.0,
                          cell_size=6, embed_dim=4, trunk_width=3)
        _, traj = read_document(params, docs[0], mode="sample",
                                rng=episode_rng(4, 1), collect_values=True,
                                keep_caches=True)
        add_rewards(traj, 0, cfg)
        p_before = traj.steps[0].skip_dist[int(SkipAction.READ)]
        assert p_before > 0.98
        grads = Gradients(params.tensors())
        episode_backward(params, traj, 0, cfg, grads)
        for name, arr in params.tensors().items():
            arr -= 0.05 * grads[name]
        _, traj2 = read_document(params, docs[0], script=traj.actions())
        p_after = traj2.steps[0].skip_dist[int(SkipAction.READ)]
        assert 0.5 < p_after < p_before

    def test_critic_regression_converges_on_frozen_trajectories(self):
        params, doc, traj, _ = self._rollout(seed=5, text="a b c d e f .")
        cfg = TrainConfig(alpha=0.0, beta=0.0, gamma=1.0, entropy_weight=0.0,
                          cell_size=6, embed_dim=4, trunk_width=3)
        frozen_rets = [s.ret for s in traj.steps]
        actions = traj.actions()

        def rollout():
            _, t = read_document(params, doc, script=actions,
                                 collect_values=True, keep_caches=True)
            for s, r in zip(t.steps, frozen_rets):
                s.ret = r
            return t

        first = critic_loss(rollout())
        for _ in range(300):
            t = rollout()
            grads = Gradients(params.tensors())
            episode_backward(params, t, doc.label, cfg, grads)
            for name, arr in params.tensors().items():
                arr -= 0.02 * grads[name]
        last_traj = rollout()
        assert critic_loss(last_traj) < first / 100.0
        for s in last_traj.steps:
            if s.skip_value is not None:
                assert abs(s.skip_value - s.ret) < 0.1

    def test_force_read_gradients_match_plain_lstm_classifier(self):
        # independent oracle: classifier backward + reversed BPTT, built from
        # the primitive backward ops directly
        docs, vocab = docs_from_texts(["a b , c d . e"])
        params = make_toy_model(6, len(vocab))
        cfg = TrainConfig(cell_size=6, embed_dim=4, trunk_width=3)
        doc = docs[0]
        logits, traj = read_document(params, doc, agent_override=FORCE_READ,
                                     keep_caches=True)
        grads = Gradients(params.tensors())
        episode_backward(params, traj, doc.label, cfg, grads)

        oracle = Gradients(params.tensors())
        probs = softmax(logits)
        dlogits = probs.copy()
        dlogits[doc.label] -= 1.0
        caches = traj.caches
        dhid, dw, db = dense_backward(params.classifier.out, caches["out"], dlogits)
        oracle.add("classifier.out.w", dw)
        oracle.add("classifier.out.b", db)
        d_o, dw, db = dense_backward(params.classifier.hidden, caches["hidden"], dhid)
        oracle.add("classifier.hidden.w", dw)
        oracle.add("classifier.hidden.b", db)
        d_c = np.zeros(params.cell_size)
        for cache in reversed(caches["steps"]):
            dx, d_o, d_c, dw, db = lstm_step_backward(params.lstm, cache["lstm"],
                                                      d_o, d_c)
            oracle.add("lstm.w", dw)
            oracle.add("lstm.b", db)
            oracle.data["embedding"][cache["token_id"]] += dx
        for name, g in oracle.items():
            assert np.array_equal(g, grads[name])


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.lr == 0.0005
        assert cfg.cell_size == 128
        assert cfg.c_skip == 0.5
        assert cfg.beta == 10.0
        cfg.validate()

    def test_parse_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# comment line\n"
            "lr = 0.001\n"
            "batch_size = 100\n"
            "w_rolling = 0.05\n"
            "entropy_target = read95\n"
            "seed = 17\n")
        cfg = parse_config(path)
        assert cfg.lr == 0.001
        assert cfg.batch_size == 100
        assert cfg.w_rolling == 0.05
        assert cfg.entropy_target == "read95"
        assert cfg.seed == 17
        assert cfg.cell_size == 128  # untouched default

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("learning_rate = 0.1\n")
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lr = fast\n")
        with pytest.raises(ValueError, match="bad value"):
            parse_config(path)

    def test_validation_errors(self):
        with pytest.raises(ValueError):
            TrainConfig(c_skip=0.0).validate()
        with pytest.raises(ValueError):
            TrainConfig(c_skip=1.5).validate()
        with pytest.raises(ValueError):
            TrainConfig(action_mode="argmax").validate()
        with pytest.raises(ValueError):
            TrainConfig(dropout_embed=1.0).validate()


def small_task(n_train=400, n_val=120, seed=5, cell=24, dim=12, rows=None):
    rng = np.random.default_rng(seed)
    make_rows = rows or generate_keyword_docs
    vocab = Vocabulary()
    train = [Document(tokenize(t, vocab, grow_vocab=True), int(l))
             for l, t in make_rows(n_train, rng)]
    val = [Document(tokenize(t, vocab), int(l))
           for l, t in make_rows(n_val, rng)]
    cfg = TrainConfig(lr=0.001, batch_size=32, cell_size=cell, embed_dim=dim,
                      pretrain_epochs=5, speedread_epochs=2, seed=0)
    r = np.random.default_rng([cfg.seed, 9])
    params = ModelParams.new(r, len(vocab), dim, cell, 2,
                             embedding=random_embeddings(vocab, dim, r))
    return params, train, val, cfg


class TestPhases:
    def test_pretrain_learns_separable_task_within_five_epochs(self):
        params, train, val, cfg = small_task(rows=easy_rows)
        log = io.StringIO()
        params, history = pretrain(params, train, val, cfg, log=log)
        assert max(h.val_accuracy for h in history) >= 0.95
        # loss drops over the first epoch
        lines = [l for l in log.getvalue().splitlines() if l.startswith("1\t")]
        losses = [float(l.split("\t")[2]) for l in lines]
        k = max(1, len(losses) // 4)
        assert np.mean(losses[-k:]) < np.mean(losses[:k])

    def test_pretrain_empty_training_set_rejected(self):
        params, train, val, cfg = small_task(n_train=10, n_val=5)
        with pytest.raises(ValueError):
            pretrain(params, [], val, cfg)

    def test_pretrain_deterministic(self):
        p1, train, val, cfg = small_task(n_train=60, n_val=30)
        cfg.pretrain_epochs = 2
        log1, log2 = io.StringIO(), io.StringIO()
        _, h1 = pretrain(p1, train, val, cfg, log=log1)
        p2, train2, val2, cfg2 = small_task(n_train=60, n_val=30)
        cfg2.pretrain_epochs = 2
        _, h2 = pretrain(p2, train2, val2, cfg2, log=log2)
        assert log1.getvalue() == log2.getvalue()
        assert [h.val_accuracy for h in h1] == [h.val_accuracy for h in h2]

    def test_checkpoint_round_trip_byte_exact(self, tmp_path):
        params, train, val, cfg = small_task(n_train=40, n_val=10)
        cfg.pretrain_epochs = 1
        params, _ = pretrain(params, train, val, cfg)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        params.save(p1)
        ModelParams.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_warm_start_probabilities(self):
        params, _, _, _ = small_task(n_train=10, n_val=5)
        warm_start_agents(params)
        rng = np.random.default_rng(2)
        for _ in range(10):
            z = rng.normal(size=params.skip_agent.trunk.n_in)
            state, _ = params.skip_agent.trunk_forward(z)
            dist, _ = params.skip_agent.policy_forward(state)
            assert abs(dist[int(SkipAction.READ)] - 0.990048) < 1e-3
            o = rng.normal(size=params.cell_size)
            state, _ = params.jump_agent.trunk_forward(o)
            dist, _ = params.jump_agent.policy_forward(state)
            assert abs(dist[int(JumpAction.NEXT_WORD)] - 0.970688) < 1e-3

    def test_pad_embedding_row_never_updated(self):
        params, train, val, cfg = small_task(n_train=80, n_val=20,
                                             rows=easy_rows)
        cfg.pretrain_epochs = 2
        cfg.speedread_epochs = 1
        assert not params.embedding.matrix[0].any()
        params, _ = pretrain(params, train, val, cfg)
        params, _ = speedread_train(params, train, val, cfg)
        assert not params.embedding.matrix[0].any()

    def test_speedread_freezes_embeddings(self):
        params, train, val, cfg = small_task(n_train=60, n_val=20)
        cfg.pretrain_epochs = 1
        cfg.speedread_epochs = 1
        params, _ = pretrain(params, train, val, cfg)
        before = params.embedding.matrix.copy()
        params, _ = speedread_train(params, train, val, cfg)
        assert np.array_equal(params.embedding.matrix, before)
        assert params.embedding.trainable is False

    def test_huge_entropy_weight_pins_read95_target(self):
        params, train, val, cfg = small_task(n_train=150, n_val=60)
        cfg.pretrain_epochs = 1
        cfg.speedread_epochs = 2
        cfg.entropy_weight = 10.0
        cfg.entropy_target = "read95"
        params, _ = pretrain(params, train, val, cfg)
        params, history = speedread_train(params, train, val, cfg)
        assert history[-1].val_read_pct > 90.0


class TestEvaluateSplit:
    def test_force_read_stats(self):
        docs, vocab = docs_from_texts(["a b c .", "d e f ."], labels=[0, 1])
        params = make_toy_model(0, len(vocab))
        res = evaluate_split(params, docs, force_read=True)
        assert (res.jump_pct, res.read_pct, res.skip_pct) == (0.0, 100.0, 0.0)
        assert res.flop_ratio == 1.0

    def test_worker_count_does_not_change_results(self):
        rng = np.random.default_rng(9)
        texts = [random_token_text(rng, int(rng.integers(3, 12)))
                 for _ in range(20)]
        docs, vocab = docs_from_texts(texts, labels=[i % 2 for i in range(20)])
        params = make_toy_model(1, len(vocab))
        res1 = evaluate_split(params, docs, mode="sample", seed=3, max_workers=1)
        res4 = evaluate_split(params, docs, mode="sample", seed=3, max_workers=4)
        assert res1.predictions == res4.predictions
        assert res1.flops_speed == res4.flops_speed

    def test_empty_split_rejected(self):
        params = make_toy_model(0, 4)
        with pytest.raises(ValueError):
            evaluate_split(params, [])
