"""Scikit-learn style front end: fit on raw texts, predict class labels.

Wraps the two training phases (supervised full-read, then joint actor-critic
speed reading) behind the usual estimator surface so the model composes with
pipelines, cross-validation, and cloning.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import Document, Vocabulary, load_embeddings, random_embeddings, tokenize
from .model import ModelParams
from .trainer import TrainConfig, evaluate_split, pretrain, speedread_train
from .reader import predict as predict_logits
from .reader import read_document
from .nncore import softmax


def _check_texts(X, allow_empty=False):
    texts = list(X)
    if not texts and not allow_empty:
        raise ValueError("X must contain at least one text")
    for i, t in enumerate(texts):
        if not isinstance(t, str):
            raise ValueError(f"X[{i}] is not a string (got {type(t).__name__})")
        if not t.strip():
            raise ValueError(f"X[{i}] is empty; every document needs at least one token")
    return texts


class SpeedReaderClassifier(ClassifierMixin, BaseEstimator):
    """Text classifier that learns to skip and jump while it reads.

    fit() runs supervised full-read pretraining followed by actor-critic
    speed-read training; predict() greedily reads each text. reading_report()
    exposes the speed side: reading percentages and the FLOP reduction against
    a full read of the same texts.
    """

    def __init__(self, embed_dim=32, cell_size=48, trunk_width=25, lr=0.001,
                 batch_size=32, pretrain_epochs=2, speedread_epochs=3,
                 dropout_embed=0.1, dropout_output=0.1, clip=0.1, c_skip=0.5,
                 w_rolling=0.1, entropy_weight=0.1, alpha=1.0, beta=10.0,
                 gamma=1.0, entropy_target="uniform", action_mode="greedy",
                 validation_fraction=0.1, embeddings_path=None, random_state=0):
        self.embed_dim = embed_dim
        self.cell_size = cell_size
        self.trunk_width = trunk_width
        self.lr = lr
        self.batch_size = batch_size
        self.pretrain_epochs = pretrain_epochs
        self.speedread_epochs = speedread_epochs
        self.dropout_embed = dropout_embed
        self.dropout_output = dropout_output
        self.clip = clip
        self.c_skip = c_skip
        self.w_rolling = w_rolling
        self.entropy_weight = entropy_weight
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.entropy_target = entropy_target
        self.action_mode = action_mode
        self.validation_fraction = validation_fraction
        self.embeddings_path = embeddings_path
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            lr=self.lr, batch_size=self.batch_size,
            dropout_embed=self.dropout_embed, dropout_output=self.dropout_output,
            cell_size=self.cell_size, embed_dim=self.embed_dim,
            trunk_width=self.trunk_width, clip=self.clip, c_skip=self.c_skip,
            w_rolling=self.w_rolling, entropy_weight=self.entropy_weight,
            alpha=self.alpha, beta=self.beta, gamma=self.gamma,
            action_mode=self.action_mode, entropy_target=self.entropy_target,
            pretrain_epochs=self.pretrain_epochs,
            speedread_epochs=self.speedread_epochs, seed=self.random_state,
        ).validate()

    def fit(self, X, y):
        texts = _check_texts(X)
        y = np.asarray(y)
        if len(y) != len(texts):
            raise ValueError(f"X has {len(texts)} texts but y has {len(y)} labels")
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        label_idx = np.searchsorted(self.classes_, y)

        config = self._config()
        vocab = Vocabulary()
        docs = [Document(tokenize(t, vocab, grow_vocab=True), int(lab))
                for t, lab in zip(texts, label_idx)]

        rng = np.random.default_rng([config.seed, 9])
        if self.embeddings_path is not None:
            table = load_embeddings(self.embeddings_path, vocab, config.embed_dim, rng)
        else:
            table = random_embeddings(vocab, config.embed_dim, rng)
        params = ModelParams.new(rng, len(vocab), config.embed_dim,
                                 config.cell_size, len(self.classes_),
                                 trunk_width=config.trunk_width, embedding=table)

        n_val = int(len(docs) * self.validation_fraction)
        if n_val > 0:
            perm = rng.permutation(len(docs))
            val_docs = [docs[i] for i in perm[:n_val]]
            train_docs = [docs[i] for i in perm[n_val:]]
        else:
            train_docs, val_docs = docs, []

        params, self.pretrain_history_ = pretrain(params, train_docs, val_docs, config)
        params, self.speedread_history_ = speedread_train(
            params, train_docs, val_docs, config)
        self.model_ = params
        self.vocab_ = vocab
        return self

    def _documents(self, X):
        check_is_fitted(self, "model_")
        return [Document(tokenize(t, self.vocab_), 0) for t in _check_texts(X)]

    def predict(self, X):
        docs = self._documents(X)
        preds = [predict_logits(read_document(self.model_, doc,
                                              mode=self.action_mode)[0])
                 for doc in docs]
        return self.classes_[np.asarray(preds, dtype=int)]

    def predict_proba(self, X):
        docs = self._documents(X)
        return np.vstack([softmax(read_document(self.model_, doc,
                                                mode=self.action_mode)[0])
                          for doc in docs])

    def reading_report(self, X, y=None):
        """Reading percentages and FLOP reduction over X (accuracy if y given)."""
        docs = self._documents(X)
        if y is not None:
            label_idx = np.searchsorted(self.classes_, np.asarray(y))
            for doc, lab in zip(docs, label_idx):
                doc.label = int(lab)
        result = evaluate_split(self.model_, docs, mode=self.action_mode,
                                seed=self.random_state)
        report = {
            "jump_pct": result.jump_pct,
            "read_pct": result.read_pct,
            "skip_pct": result.skip_pct,
            "flop_reduction": result.flop_ratio,
        }
        if y is not None:
            report["accuracy"] = result.accuracy
        return report
