"""Attention-based encoder-decoder over trees or token sequences.

One model couples: an embedding per tree-vocabulary symbol, an encoder
(one of the three tree cells, or a chain LSTM over the linearized token
sequence), additive attention over all encoder states, an LSTM decoder fed
with [previous word embedding; previous context vector], and a softmax
projection.  Training minimizes token-level cross entropy with Adam;
generation is greedy or beam search with per-step attention recorded for
inspection.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .asts import (Ast, binarize, is_marker, linearize, normalize_labels,
                   symbol_to_label_kind)
from .cells import MULTI_WAY, N_ARY, TREE_KINDS, encode_tree, init_tree_cell
from .corpus import BOS, EOS, PAD, Sample, Vocab, encode_comment, node_symbol_id
from .lstm import LstmState, glorot, init_lstm_params, lstm_step, zero_state
from .tensor import Graph, NonFiniteError, ShapeError

SEQUENCE = "sequence"
ENCODER_KINDS = TREE_KINDS + (SEQUENCE,)

NARY_ARITY = 2  # fixed; trees are binarized for the n_ary encoder


@dataclass
class ModelConfig:
    encoder_kind: str = MULTI_WAY
    layers: int = 2
    dim: int = 256
    dropout: float = 0.5
    lr: float = 0.001
    batch: int = 80
    epochs: int = 20
    max_decode_len: int = 30
    beam: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.encoder_kind not in ENCODER_KINDS:
            raise ValueError(f"encoder_kind must be one of {ENCODER_KINDS}, "
                             f"got {self.encoder_kind!r}")
        if self.layers not in (1, 2):
            raise ValueError(f"layers must be 1 or 2, got {self.layers}")
        if self.dim <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.beam < 1:
            raise ValueError(f"beam must be >= 1, got {self.beam}")
        if self.max_decode_len < 0:
            raise ValueError(f"max_decode_len must be >= 0, got {self.max_decode_len}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        cfg = cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})
        cfg.validate()
        return cfg


@dataclass
class AttentionParams:
    w_score: np.ndarray  # 1 x dim, the scoring vector
    w_combine: np.ndarray  # dim x 2*dim over [decoder state; encoder state]

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        return {f"{prefix}.w_score": self.w_score, f"{prefix}.w_combine": self.w_combine}


class DecoderState(NamedTuple):
    layers: Tuple[LstmState, ...]
    prev_word: int  # comment-vocabulary id of the previous word
    prev_context: int  # graph node of the previous context vector


class Encoded(NamedTuple):
    states: List[int]  # graph node per encoder position (top layer h)
    columns: List[int]  # node index (tree) or token position (sequence)
    init: List[LstmState]  # per-layer decoder initialization


def attention_weights(g: Graph, h_dec: int, enc_states: Sequence[int],
                      attn: AttentionParams) -> int:
    """Softmax over additive scores of the decoder state against each
    encoder state; returns the graph node of the weight vector."""
    if not enc_states:
        raise ShapeError("attention_weights: no encoder states")
    w_comb = g.leaf(attn.w_combine)
    w_score = g.leaf(attn.w_score)
    scores = [g.matvec(w_score, g.tanh(g.matvec(w_comb, g.concat((h_dec, h_e)))))
              for h_e in enc_states]
    return g.softmax(g.concat(scores))


def context_vector(g: Graph, alpha: int, enc_states: Sequence[int]) -> int:
    """Attention-weighted sum of encoder states."""
    n = len(enc_states)
    if g.value(alpha).shape != (n,):
        raise ShapeError(f"context_vector: {g.value(alpha).shape} weights "
                         f"for {n} encoder states")
    eye = np.eye(n)
    terms = []
    for j, h_e in enumerate(enc_states):
        pick = g.matvec(g.constant(eye[j:j + 1]), alpha)  # alpha_j as a scalar
        terms.append(g.mul(pick, h_e))
    return g.sum_n(terms)


class Summarizer:
    """The full model: parameters plus forward passes for loss and generation."""

    def __init__(self, config: ModelConfig, ast_vocab: Vocab, comment_vocab: Vocab):
        config.validate()
        self.config = config
        self.ast_vocab = ast_vocab
        self.comment_vocab = comment_vocab
        rng = np.random.default_rng(config.seed)
        dim = config.dim

        self.ast_embed = glorot(rng, len(ast_vocab), dim)
        self.com_embed = glorot(rng, len(comment_vocab), dim)
        if config.encoder_kind == SEQUENCE:
            self.encoder = [init_lstm_params(rng, dim, dim)
                            for _ in range(config.layers)]
        else:
            self.encoder = [init_tree_cell(config.encoder_kind, rng, dim, dim,
                                           arity=NARY_ARITY)
                            for _ in range(config.layers)]
        self.decoder = [init_lstm_params(rng, 2 * dim if l == 0 else dim, dim)
                        for l in range(config.layers)]
        self.attention = AttentionParams(w_score=glorot(rng, 1, dim),
                                         w_combine=glorot(rng, dim, 2 * dim))
        self.proj_w = glorot(rng, len(comment_vocab), dim)
        self.proj_b = np.zeros(len(comment_vocab))
        self._params = self._collect_params()

    def _collect_params(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {
            "embed.ast": self.ast_embed, "embed.comment": self.com_embed}
        for l, enc in enumerate(self.encoder):
            out.update(enc.named(f"encoder.l{l}"))
        for l, dec in enumerate(self.decoder):
            out.update(dec.named(f"decoder.l{l}"))
        out.update(self.attention.named("attention"))
        out["proj.w"] = self.proj_w
        out["proj.b"] = self.proj_b
        return out

    def named_parameters(self) -> Dict[str, np.ndarray]:
        return self._params

    def load_parameters(self, values: Dict[str, np.ndarray]) -> None:
        mine = self._params
        if set(values) != set(mine):
            missing = sorted(set(mine) - set(values))
            extra = sorted(set(values) - set(mine))
            raise ValueError(f"parameter paths differ: missing {missing}, extra {extra}")
        for name, arr in mine.items():
            if values[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{values[name].shape} vs {arr.shape}")
            np.copyto(arr, values[name])

    # -- encoding -----------------------------------------------------------

    def encode(self, g: Graph, ast: Ast, *, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Encoded:
        norm = normalize_labels(ast, self.ast_vocab)
        if self.config.encoder_kind == SEQUENCE:
            return self._encode_sequence(g, norm, training, rng)
        return self._encode_tree(g, norm, training, rng)

    def _encode_tree(self, g: Graph, norm: Ast, training, rng) -> Encoded:
        tree = binarize(norm) if self.config.encoder_kind == N_ARY else norm
        table = g.leaf(self.ast_embed)
        real = [i for i in range(len(tree)) if not is_marker(tree.nodes[i])]
        inputs = {}
        for i in real:
            node = tree.nodes[i]
            inputs[i] = g.embedding(table, node_symbol_id(self.ast_vocab,
                                                          node.label, node.kind))
        layers = encode_tree(g, tree, inputs, self.encoder,
                             dropout=self.config.dropout, rng=rng,
                             training=training, shortcut=True)
        states = [layers[-1][i].h for i in real]
        init = [layer[tree.root] for layer in layers]
        return Encoded(states=states, columns=real, init=init)

    def _encode_sequence(self, g: Graph, norm: Ast, training, rng) -> Encoded:
        tokens = linearize(norm)
        table = g.leaf(self.ast_embed)
        ids = [self._token_id(t) for t in tokens]
        xs = [g.embedding(table, i) for i in ids]
        keep = 1.0 - self.config.dropout
        prev = xs
        finals: List[LstmState] = []
        states: List[LstmState] = []
        for l, params in enumerate(self.encoder):
            inputs = [g.dropout(x, keep, rng) if training and keep < 1.0 else x
                      for x in prev]
            states = []
            st = zero_state(g, self.config.dim)
            for x in inputs:
                st = lstm_step(g, x, st, params)
                states.append(st)
            if l > 0:
                states = [LstmState(h=g.add(s.h, x), c=s.c)
                          for s, x in zip(states, inputs)]
            finals.append(states[-1])
            prev = [s.h for s in states]
        return Encoded(states=[s.h for s in states],
                       columns=list(range(len(tokens))), init=finals)

    def _token_id(self, token: str) -> int:
        if token in ("(", ")"):
            return self.ast_vocab.id(token)
        label, kind = symbol_to_label_kind(token)
        return node_symbol_id(self.ast_vocab, label, kind)

    # -- decoding -----------------------------------------------------------

    def initial_state(self, g: Graph, enc: Encoded) -> DecoderState:
        zero_ctx = g.constant(np.zeros(self.config.dim))
        return DecoderState(layers=tuple(enc.init),
                            prev_word=self.comment_vocab.id(BOS),
                            prev_context=zero_ctx)

    def decode_step(self, g: Graph, state: DecoderState, enc: Encoded, *,
                    training: bool = False,
                    rng: Optional[np.random.Generator] = None
                    ) -> Tuple[int, int, DecoderState]:
        """One decoder update; returns (distribution, attention weights,
        carry state).  The carry's prev_word is unset (-1); the caller fills
        it once the next word is chosen."""
        table = g.leaf(self.com_embed)
        x = g.concat((g.embedding(table, state.prev_word), state.prev_context))
        keep = 1.0 - self.config.dropout
        use_drop = training and keep < 1.0
        new_layers = []
        for l, params in enumerate(self.decoder):
            if use_drop:
                x = g.dropout(x, keep, rng)
            st = lstm_step(g, x, state.layers[l], params)
            if l > 0:
                st = LstmState(h=g.add(st.h, x), c=st.c)
            new_layers.append(st)
            x = st.h
        h_top = new_layers[-1].h
        alpha = attention_weights(g, h_top, enc.states, self.attention)
        ctx = context_vector(g, alpha, enc.states)
        logits = g.add(g.matvec(g.leaf(self.proj_w), h_top), g.leaf(self.proj_b))
        dist = g.softmax(logits)
        carry = DecoderState(layers=tuple(new_layers), prev_word=-1,
                             prev_context=ctx)
        return dist, alpha, carry

    # -- losses --------------------------------------------------------------

    def sample_loss(self, g: Graph, sample: Sample, *, training: bool = False,
                    rng: Optional[np.random.Generator] = None) -> Tuple[int, int]:
        """Teacher-forced cross entropy summed over the gold word sequence
        plus the closing end token; returns (loss node, token count)."""
        enc = self.encode(g, sample.ast, training=training, rng=rng)
        state = self.initial_state(g, enc)
        gold = encode_comment(self.comment_vocab, sample.comment)
        targets = gold + [self.comment_vocab.id(EOS)]
        v_size = len(self.comment_vocab)
        neg_one = g.constant(np.array([-1.0]))
        losses = []
        for t, target in enumerate(targets):
            dist, _, carry = self.decode_step(g, state, enc, training=training, rng=rng)
            pick = np.zeros((1, v_size))
            pick[0, target] = 1.0
            p_gold = g.matvec(g.constant(pick), dist)
            losses.append(g.mul(neg_one, g.log(p_gold)))
            state = carry._replace(prev_word=target)
        return g.sum_n(losses), len(targets)

    def batch_loss(self, g: Graph, batch: Sequence[Sample], *,
                   training: bool = False,
                   rng: Optional[np.random.Generator] = None) -> int:
        """Per-batch loss: token-count average of the summed sample losses."""
        totals = []
        tokens = 0
        for sample in batch:
            loss, n = self.sample_loss(g, sample, training=training, rng=rng)
            totals.append(loss)
            tokens += n
        return g.mul(g.sum_n(totals), g.constant(np.array([1.0 / tokens])))

    # -- generation ------------------------------------------------------------

    def generate(self, ast: Ast, *, max_len: Optional[int] = None,
                 beam: Optional[int] = None
                 ) -> Tuple[List[str], np.ndarray, List[int]]:
        """Produce a comment for one tree.

        Returns (words, attention, columns): attention has one row per
        emitted word and one column per encoder position, rows summing to 1.
        The pad/bos ids are never selectable, so the words decode cleanly.
        """
        max_len = self.config.max_decode_len if max_len is None else max_len
        beam = self.config.beam if beam is None else beam
        g = Graph()
        enc = self.encode(g, ast, training=False)
        n_cols = len(enc.states)
        if max_len == 0:
            return [], np.zeros((0, n_cols)), enc.columns
        banned = [self.comment_vocab.id(PAD), self.comment_vocab.id(BOS)]
        eos = self.comment_vocab.id(EOS)
        if beam == 1:
            words_ids, rows = self._greedy(g, enc, max_len, banned, eos)
        else:
            words_ids, rows = self._beam(g, enc, max_len, banned, eos, beam)
        words = [self.comment_vocab.symbol(i) for i in words_ids]
        attn = np.vstack(rows) if rows else np.zeros((0, n_cols))
        return words, attn, enc.columns

    def _greedy(self, g, enc, max_len, banned, eos):
        state = self.initial_state(g, enc)
        out: List[int] = []
        rows: List[np.ndarray] = []
        for _ in range(max_len):
            dist, alpha, carry = self.decode_step(g, state, enc)
            probs = g.value(dist).copy()
            probs[banned] = -1.0
            word = int(np.argmax(probs))
            if word == eos:
                break
            out.append(word)
            rows.append(g.value(alpha).copy())
            state = carry._replace(prev_word=word)
        return out, rows

    def _beam(self, g, enc, max_len, banned, eos, beam):
        init = self.initial_state(g, enc)
        live = [(0.0, [], init, [])]  # (logprob, words, state, attention rows)
        done: List[Tuple[float, List[int], List[np.ndarray]]] = []
        for _ in range(max_len):
            candidates = []
            for logp, words, state, rows in live:
                dist, alpha, carry = self.decode_step(g, state, enc)
                probs = g.value(dist).copy()
                probs[banned] = 0.0
                logs = np.full_like(probs, -np.inf)
                pos = probs > 0
                logs[pos] = np.log(probs[pos])
                order = np.argsort(-logs, kind="stable")[:beam]
                row = g.value(alpha).copy()
                for w in order:
                    w = int(w)
                    if logs[w] == -np.inf:
                        continue
                    score = logp + float(logs[w])
                    if w == eos:
                        done.append((score / (len(words) + 1), words, rows))
                    else:
                        candidates.append((score, words + [w],
                                           carry._replace(prev_word=w),
                                           rows + [row]))
            if not candidates:
                break
            candidates.sort(key=lambda c: (-c[0], c[1]))
            live = candidates[:beam]
        for logp, words, state, rows in live:
            done.append((logp / max(len(words), 1), words, rows))
        done.sort(key=lambda c: (-c[0], c[1]))
        _, words, rows = done[0]
        return words, rows


class Adam:
    """Adaptive-moment optimizer over the model's named parameter arrays."""

    def __init__(self, params: Dict[str, np.ndarray], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, arr in self.params.items():
            grad = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            arr -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def train_step(model: Summarizer, batch: Sequence[Sample], opt: Adam,
               rng: np.random.Generator) -> float:
    """One optimizer update on a batch; returns the batch loss value."""
    g = Graph()
    loss = model.batch_loss(g, batch, training=True, rng=rng)
    value = float(g.value(loss)[0])
    if not math.isfinite(value):
        raise NonFiniteError(f"non-finite training loss {value!r} on batch "
                             f"[{', '.join(s.id for s in batch)}]")
    g.backward(loss)
    grads = {}
    for name, arr in model.named_parameters().items():
        grad = g.grad_of(arr)
        if not math.isfinite(float(grad.sum())):
            raise NonFiniteError(f"non-finite gradient for parameter {name}")
        grads[name] = grad
    opt.step(grads)
    return value
