"""Tree cells and multi-layer tree encoding.

Three cell flavors compute a node's state from its input vector and the
states of its ordered children:

  - child_sum: children are summed; order-blind, any arity.
  - n_ary: fixed arity with per-position forget maps over the concatenated
    child vector; order-aware, used on binarized trees.
  - multi_way: a bidirectional chain LSTM per gate consumes the ordered
    child-state sequence right before the gate's linear map; order-aware
    at any arity.  The forget gate keeps the whole per-child sequence, the
    other gates use the last combined vector.

A leaf is uniform across flavors: the recurrent contribution is a zero
vector and the memory sum has no forget terms, which reduces every cell to
a chain-LSTM step from a zero state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .asts import Ast, is_marker
from .lstm import (FORGET_BIAS, LstmParams, LstmState, bilstm_run, glorot,
                   init_lstm_params)
from .tensor import Graph, ShapeError

CHILD_SUM = "child_sum"
N_ARY = "n_ary"
MULTI_WAY = "multi_way"
TREE_KINDS = (CHILD_SUM, N_ARY, MULTI_WAY)

_GATES = ("f", "u", "i", "o")


@dataclass
class ChildSumParams:
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
    def d_out(self) -> int:
        return self.bf.shape[0]

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        return {f"{prefix}.{n}": getattr(self, n)
                for n in ("wf", "wu", "wi", "wo", "uf", "uu", "ui", "uo",
                          "bf", "bu", "bi", "bo")}


@dataclass
class NaryParams:
    wf: np.ndarray
    wu: np.ndarray
    wi: np.ndarray
    wo: np.ndarray
    uf_k: List[np.ndarray]  # one forget map per child position, over concat
    uu: np.ndarray
    ui: np.ndarray
    uo: np.ndarray
    bf: np.ndarray
    bu: np.ndarray
    bi: np.ndarray
    bo: np.ndarray

    @property
    def arity(self) -> int:
        return len(self.uf_k)

    @property
    def d_out(self) -> int:
        return self.bf.shape[0]

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        out = {f"{prefix}.{n}": getattr(self, n)
               for n in ("wf", "wu", "wi", "wo", "uu", "ui", "uo",
                         "bf", "bu", "bi", "bo")}
        for k, m in enumerate(self.uf_k):
            out[f"{prefix}.uf{k}"] = m
        return out


@dataclass
class BiLstmParams:
    fwd: LstmParams
    bwd: LstmParams

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        return {**self.fwd.named(f"{prefix}.fwd"), **self.bwd.named(f"{prefix}.bwd")}


@dataclass
class MultiWayParams:
    wf: np.ndarray
    wu: np.ndarray
    wi: np.ndarray
    wo: np.ndarray
    lf: BiLstmParams  # gate LSTMs over the child-state sequence
    lu: BiLstmParams
    li: BiLstmParams
    lo: BiLstmParams
    uf: np.ndarray  # post-LSTM maps, 2*d_out -> d_out
    uu: np.ndarray
    ui: np.ndarray
    uo: np.ndarray
    bf: np.ndarray
    bu: np.ndarray
    bi: np.ndarray
    bo: np.ndarray

    @property
    def d_out(self) -> int:
        return self.bf.shape[0]

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        out = {f"{prefix}.{n}": getattr(self, n)
               for n in ("wf", "wu", "wi", "wo", "uf", "uu", "ui", "uo",
                         "bf", "bu", "bi", "bo")}
        for gate in _GATES:
            out.update(getattr(self, f"l{gate}").named(f"{prefix}.l{gate}"))
        return out


TreeCellParams = Union[ChildSumParams, NaryParams, MultiWayParams]


def init_child_sum(rng: np.random.Generator, d_in: int, d_out: int) -> ChildSumParams:
    return ChildSumParams(
        wf=glorot(rng, d_out, d_in), wu=glorot(rng, d_out, d_in),
        wi=glorot(rng, d_out, d_in), wo=glorot(rng, d_out, d_in),
        uf=glorot(rng, d_out, d_out), uu=glorot(rng, d_out, d_out),
        ui=glorot(rng, d_out, d_out), uo=glorot(rng, d_out, d_out),
        bf=np.full(d_out, FORGET_BIAS), bu=np.zeros(d_out),
        bi=np.zeros(d_out), bo=np.zeros(d_out))


def init_nary(rng: np.random.Generator, d_in: int, d_out: int, arity: int = 2) -> NaryParams:
    wide = arity * d_out
    return NaryParams(
        wf=glorot(rng, d_out, d_in), wu=glorot(rng, d_out, d_in),
        wi=glorot(rng, d_out, d_in), wo=glorot(rng, d_out, d_in),
        uf_k=[glorot(rng, d_out, wide) for _ in range(arity)],
        uu=glorot(rng, d_out, wide), ui=glorot(rng, d_out, wide),
        uo=glorot(rng, d_out, wide),
        bf=np.full(d_out, FORGET_BIAS), bu=np.zeros(d_out),
        bi=np.zeros(d_out), bo=np.zeros(d_out))


def init_multiway(rng: np.random.Generator, d_in: int, d_out: int) -> MultiWayParams:
    def bilstm() -> BiLstmParams:
        return BiLstmParams(fwd=init_lstm_params(rng, d_out, d_out),
                            bwd=init_lstm_params(rng, d_out, d_out))

    return MultiWayParams(
        wf=glorot(rng, d_out, d_in), wu=glorot(rng, d_out, d_in),
        wi=glorot(rng, d_out, d_in), wo=glorot(rng, d_out, d_in),
        lf=bilstm(), lu=bilstm(), li=bilstm(), lo=bilstm(),
        uf=glorot(rng, d_out, 2 * d_out), uu=glorot(rng, d_out, 2 * d_out),
        ui=glorot(rng, d_out, 2 * d_out), uo=glorot(rng, d_out, 2 * d_out),
        bf=np.full(d_out, FORGET_BIAS), bu=np.zeros(d_out),
        bi=np.zeros(d_out), bo=np.zeros(d_out))


def init_tree_cell(kind: str, rng: np.random.Generator, d_in: int, d_out: int,
                   arity: int = 2) -> TreeCellParams:
    if kind == CHILD_SUM:
        return init_child_sum(rng, d_in, d_out)
    if kind == N_ARY:
        return init_nary(rng, d_in, d_out, arity)
    if kind == MULTI_WAY:
        return init_multiway(rng, d_in, d_out)
    raise ValueError(f"unknown tree cell kind {kind!r}")


def _gate_ids(g: Graph, p: TreeCellParams) -> tuple:
    """Leaf ids for the shared W/U/b bundle, cached per graph."""
    ids = g.param_cache.get(id(p))
    if ids is None:
        uf = [g.leaf(m) for m in p.uf_k] if isinstance(p, NaryParams) else g.leaf(p.uf)
        ids = (g.leaf(p.wf), g.leaf(p.wu), g.leaf(p.wi), g.leaf(p.wo),
               uf, g.leaf(p.uu), g.leaf(p.ui), g.leaf(p.uo),
               g.leaf(p.bf), g.leaf(p.bu), g.leaf(p.bi), g.leaf(p.bo))
        g.param_cache[id(p)] = ids
    return ids


def child_sum_step(g: Graph, x: int, children: Sequence[LstmState],
                   p: ChildSumParams) -> LstmState:
    """Summed child states drive u/i/o; each child gets its own forget gate."""
    wf, wu, wi, wo, uf, uu, ui, uo, bf, bu, bi, bo = _gate_ids(g, p)
    mv, sn = g.matvec, g.sum_n
    if children:
        h_tilde = sn([st.h for st in children])
    else:
        h_tilde = g.constant(np.zeros(p.d_out))
    u = g.tanh(sn((mv(wu, x), mv(uu, h_tilde), bu)))
    i = g.sigmoid(sn((mv(wi, x), mv(ui, h_tilde), bi)))
    o = g.sigmoid(sn((mv(wo, x), mv(uo, h_tilde), bo)))
    terms = [g.mul(i, u)]
    for st in children:
        f_k = g.sigmoid(sn((mv(wf, x), mv(uf, st.h), bf)))
        terms.append(g.mul(st.c, f_k))
    c = sn(terms)
    return LstmState(h=g.mul(o, g.tanh(c)), c=c)


def nary_step(g: Graph, x: int, children: Sequence[LstmState], p: NaryParams) -> LstmState:
    """Fixed-arity cell over the concatenated child vector.

    The caller fills absent positions with zero states; the count must
    equal the cell arity exactly.
    """
    if len(children) != p.arity:
        raise ShapeError(f"nary_step: got {len(children)} children, arity is {p.arity}")
    wf, wu, wi, wo, uf_k, uu, ui, uo, bf, bu, bi, bo = _gate_ids(g, p)
    mv, sn = g.matvec, g.sum_n
    h_hat = g.concat([st.h for st in children])
    u = g.tanh(sn((mv(wu, x), mv(uu, h_hat), bu)))
    i = g.sigmoid(sn((mv(wi, x), mv(ui, h_hat), bi)))
    o = g.sigmoid(sn((mv(wo, x), mv(uo, h_hat), bo)))
    terms = [g.mul(i, u)]
    for k, st in enumerate(children):
        f_k = g.sigmoid(sn((mv(wf, x), mv(uf_k[k], h_hat), bf)))
        terms.append(g.mul(st.c, f_k))
    c = sn(terms)
    return LstmState(h=g.mul(o, g.tanh(c)), c=c)


def multiway_step(g: Graph, x: int, children: Sequence[LstmState],
                  p: MultiWayParams) -> LstmState:
    """Gate LSTMs scan the ordered child states before the gate maps.

    The forget gate consumes one combined vector per child position; the
    u/i/o gates take the last combined vector, whose forward half has seen
    every child and whose backward half is the reverse run's first step.
    """
    wf, wu, wi, wo, uf, uu, ui, uo, bf, bu, bi, bo = _gate_ids(g, p)
    mv, sn = g.matvec, g.sum_n
    if children:
        hs = [st.h for st in children]
        f_seq = bilstm_run(g, hs, p.lf.fwd, p.lf.bwd)
        u_chk = bilstm_run(g, hs, p.lu.fwd, p.lu.bwd)[-1]
        i_chk = bilstm_run(g, hs, p.li.fwd, p.li.bwd)[-1]
        o_chk = bilstm_run(g, hs, p.lo.fwd, p.lo.bwd)[-1]
    else:
        zero2 = g.constant(np.zeros(2 * p.d_out))
        f_seq = []
        u_chk = i_chk = o_chk = zero2
    u = g.tanh(sn((mv(wu, x), mv(uu, u_chk), bu)))
    i = g.sigmoid(sn((mv(wi, x), mv(ui, i_chk), bi)))
    o = g.sigmoid(sn((mv(wo, x), mv(uo, o_chk), bo)))
    terms = [g.mul(i, u)]
    for k, st in enumerate(children):
        f_k = g.sigmoid(sn((mv(wf, x), mv(uf, f_seq[k]), bf)))
        terms.append(g.mul(st.c, f_k))
    c = sn(terms)
    return LstmState(h=g.mul(o, g.tanh(c)), c=c)


def tree_cell_step(g: Graph, x: int, children: Sequence[LstmState],
                   p: TreeCellParams) -> LstmState:
    if isinstance(p, ChildSumParams):
        return child_sum_step(g, x, children, p)
    if isinstance(p, NaryParams):
        return nary_step(g, x, children, p)
    return multiway_step(g, x, children, p)


def encode_tree(g: Graph, ast: Ast, inputs: Dict[int, int],
                layers: Sequence[TreeCellParams], *,
                dropout: float = 0.0, rng: Optional[np.random.Generator] = None,
                training: bool = False, shortcut: bool = True) -> List[Dict[int, LstmState]]:
    """Bottom-up encoding of every (non-marker) node, layer by layer.

    ``inputs`` maps node index to the graph id of its layer-1 input vector
    (normally an embedding).  Layers past the first consume the hidden
    state from below; with ``shortcut`` they add their input back onto
    their output (first layer excluded, its input may have another width).
    Marker nodes from binarization are invisible: they contribute zero
    states at fixed-arity slots and get no state of their own.  Dropout
    hits each layer's input, training mode only.
    """
    order = [i for i in ast._post_order() if not is_marker(ast.nodes[i])]
    use_dropout = training and dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("encode_tree: dropout in training mode needs an rng")

    all_layers: List[Dict[int, LstmState]] = []
    for layer_idx, cell in enumerate(layers):
        states: Dict[int, LstmState] = {}
        below = all_layers[layer_idx - 1] if layer_idx else None
        zero = None
        for i in order:
            x = inputs[i] if below is None else below[i].h
            if use_dropout:
                x = g.dropout(x, 1.0 - dropout, rng)
            if isinstance(cell, NaryParams):
                kids = ast.nodes[i].children
                if len(kids) > cell.arity:
                    raise ShapeError(
                        f"encode_tree: node {i} has {len(kids)} children, "
                        f"n_ary arity is {cell.arity} (binarize first)")
                if zero is None:
                    z = g.constant(np.zeros(cell.d_out))
                    zero = LstmState(h=z, c=z)
                kid_states = [states[c] if not is_marker(ast.nodes[c]) else zero
                              for c in kids]
                kid_states += [zero] * (cell.arity - len(kid_states))
            else:
                kid_states = [states[c] for c in ast.nodes[i].children
                              if not is_marker(ast.nodes[c])]
            st = tree_cell_step(g, x, kid_states, cell)
            if shortcut and layer_idx > 0:
                st = LstmState(h=g.add(st.h, x), c=st.c)
            states[i] = st
        all_layers.append(states)
    return all_layers
