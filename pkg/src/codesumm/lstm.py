"""Chain LSTM step/run and a bidirectional wrapper, built on the autodiff tape.

Parameters are plain float64 arrays grouped in a dataclass; the step
functions insert them into a ``Graph`` as leaves, so gradients land on the
arrays via ``Graph.grad_of``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from .tensor import Graph


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    s = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


FORGET_BIAS = 1.0


class LstmState(NamedTuple):
    """Graph node ids of the hidden state h and memory cell c."""

    h: int
    c: int


@dataclass
class LstmParams:
    """Gate parameters: W maps the input, U the previous hidden state."""

    wf: np.ndarray
    wu: np.ndarray
    wi: np.ndarray
    wo: np.ndarray
    uf: np.ndarray
    uu: np.ndarray
    ui: np.ndarray
    uo: np.ndarray
    bf: np.ndarray
    bu: np.ndarray
    bi: np.ndarray
    bo: np.ndarray

    @property
    def d_in(self) -> int:
        return self.wf.shape[1]

    @property
    def d_out(self) -> int:
        return self.wf.shape[0]

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        return {f"{prefix}.{name}": getattr(self, name)
                for name in ("wf", "wu", "wi", "wo", "uf", "uu", "ui", "uo",
                             "bf", "bu", "bi", "bo")}


def init_lstm_params(rng: np.random.Generator, d_in: int, d_out: int) -> LstmParams:
    """Glorot-uniform weights, zero biases except the forget bias at 1.0."""
    return LstmParams(
        wf=glorot(rng, d_out, d_in), wu=glorot(rng, d_out, d_in),
        wi=glorot(rng, d_out, d_in), wo=glorot(rng, d_out, d_in),
        uf=glorot(rng, d_out, d_out), uu=glorot(rng, d_out, d_out),
        ui=glorot(rng, d_out, d_out), uo=glorot(rng, d_out, d_out),
        bf=np.full(d_out, FORGET_BIAS), bu=np.zeros(d_out),
        bi=np.zeros(d_out), bo=np.zeros(d_out),
    )


def zero_state(g: Graph, d: int) -> LstmState:
    z = g.constant(np.zeros(d))
    return LstmState(h=z, c=z)


def _leaf_ids(g: Graph, p: LstmParams) -> tuple:
    ids = g.param_cache.get(id(p))
    if ids is None:
        ids = (g.leaf(p.wf), g.leaf(p.wu), g.leaf(p.wi), g.leaf(p.wo),
               g.leaf(p.uf), g.leaf(p.uu), g.leaf(p.ui), g.leaf(p.uo),
               g.leaf(p.bf), g.leaf(p.bu), g.leaf(p.bi), g.leaf(p.bo))
        g.param_cache[id(p)] = ids
    return ids


def lstm_step(g: Graph, x: int, prev: LstmState, p: LstmParams) -> LstmState:
    """One LSTM update: gates from (x, prev.h), then the memory/hidden pair."""
    wf, wu, wi, wo, uf, uu, ui, uo, bf, bu, bi, bo = _leaf_ids(g, p)
    mv, sn = g.matvec, g.sum_n
    h_prev = prev.h
    f = g.sigmoid(sn((mv(wf, x), mv(uf, h_prev), bf)))
    u = g.tanh(sn((mv(wu, x), mv(uu, h_prev), bu)))
    i = g.sigmoid(sn((mv(wi, x), mv(ui, h_prev), bi)))
    o = g.sigmoid(sn((mv(wo, x), mv(uo, h_prev), bo)))
    c = g.add(g.mul(prev.c, f), g.mul(i, u))
    h = g.mul(o, g.tanh(c))
    return LstmState(h=h, c=c)


def lstm_run(g: Graph, seq: Sequence[int], p: LstmParams,
             init: Optional[LstmState] = None) -> List[LstmState]:
    """Left fold of lstm_step over a nonempty sequence of input vectors."""
    if not seq:
        raise ValueError("lstm_run: empty sequence")
    state = init if init is not None else zero_state(g, p.d_out)
    out = []
    for x in seq:
        state = lstm_step(g, x, state, p)
        out.append(state)
    return out


def bilstm_run(g: Graph, seq: Sequence[int], fwd: LstmParams, bwd: LstmParams) -> List[int]:
    """Bidirectional run; position i holds [forward_i ; backward_i].

    The backward pass consumes the reversed sequence and its outputs are
    re-aligned to original positions, so every combined vector sees both
    the prefix and the suffix around its position.
    """
    if not seq:
        raise ValueError("bilstm_run: empty sequence")
    f_states = lstm_run(g, seq, fwd)
    b_states = lstm_run(g, list(reversed(seq)), bwd)
    n = len(seq)
    return [g.concat([f_states[i].h, b_states[n - 1 - i].h]) for i in range(n)]
