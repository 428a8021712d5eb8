"""Straight-line scalar re-implementations used as independent oracles.

Everything here is plain Python floats and loops: no Graph, no numpy
vectorization, so a bug in the tape cannot hide in the oracle.
"""

import math


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def mv(m, v):
    rows, cols = len(m), len(v)
    return [sum(m[r][k] * v[k] for k in range(cols)) for r in range(rows)]


def vadd(*vs):
    return [sum(col) for col in zip(*vs)]


def lstm_step_oracle(x, h_prev, c_prev, p):
    """The six chain-LSTM update rules, one scalar loop per gate."""
    x = list(map(float, x))
    h_prev = list(map(float, h_prev))
    c_prev = list(map(float, c_prev))
    f = [sig(a + b + c) for a, b, c in zip(mv(p.wf, x), mv(p.uf, h_prev), p.bf)]
    u = [math.tanh(a + b + c) for a, b, c in zip(mv(p.wu, x), mv(p.uu, h_prev), p.bu)]
    i = [sig(a + b + c) for a, b, c in zip(mv(p.wi, x), mv(p.ui, h_prev), p.bi)]
    o = [sig(a + b + c) for a, b, c in zip(mv(p.wo, x), mv(p.uo, h_prev), p.bo)]
    c = [cp * fk + ik * uk for cp, fk, ik, uk in zip(c_prev, f, i, u)]
    h = [ok * math.tanh(ck) for ok, ck in zip(o, c)]
    return h, c


def lstm_run_oracle(seq, p, h0=None, c0=None):
    d = len(p.bf)
    h = h0 if h0 is not None else [0.0] * d
    c = c0 if c0 is not None else [0.0] * d
    out = []
    for x in seq:
        h, c = lstm_step_oracle(x, h, c, p)
        out.append((h, c))
    return out


def bilstm_run_oracle(seq, fwd, bwd):
    f_out = lstm_run_oracle(seq, fwd)
    b_out = lstm_run_oracle(list(reversed(seq)), bwd)
    n = len(seq)
    return [f_out[i][0] + b_out[n - 1 - i][0] for i in range(n)]


def child_sum_oracle(x, children, p):
    """children: list of (h, c) pairs; shared recurrent maps, per-child forget."""
    x = list(map(float, x))
    d = len(p.bf)
    h_tilde = [0.0] * d
    for h_k, _ in children:
        h_tilde = vadd(h_tilde, list(map(float, h_k)))
    u = [math.tanh(a + b + c) for a, b, c in zip(mv(p.wu, x), mv(p.uu, h_tilde), p.bu)]
    i = [sig(a + b + c) for a, b, c in zip(mv(p.wi, x), mv(p.ui, h_tilde), p.bi)]
    o = [sig(a + b + c) for a, b, c in zip(mv(p.wo, x), mv(p.uo, h_tilde), p.bo)]
    c_out = [ik * uk for ik, uk in zip(i, u)]
    for h_k, c_k in children:
        f_k = [sig(a + b + c) for a, b, c in zip(mv(p.wf, x), mv(p.uf, h_k), p.bf)]
        c_out = vadd(c_out, [ck * fk for ck, fk in zip(c_k, f_k)])
    h_out = [ok * math.tanh(ck) for ok, ck in zip(o, c_out)]
    return h_out, c_out


def nary_oracle(x, children, p):
    """children: exactly N (h, c) pairs; per-position forget maps over concat."""
    x = list(map(float, x))
    h_hat = []
    for h_k, _ in children:
        h_hat.extend(map(float, h_k))
    u = [math.tanh(a + b + c) for a, b, c in zip(mv(p.wu, x), mv(p.uu, h_hat), p.bu)]
    i = [sig(a + b + c) for a, b, c in zip(mv(p.wi, x), mv(p.ui, h_hat), p.bi)]
    o = [sig(a + b + c) for a, b, c in zip(mv(p.wo, x), mv(p.uo, h_hat), p.bo)]
    c_out = [ik * uk for ik, uk in zip(i, u)]
    for k, (_, c_k) in enumerate(children):
        f_k = [sig(a + b + c) for a, b, c in zip(mv(p.wf, x), mv(p.uf_k[k], h_hat), p.bf)]
        c_out = vadd(c_out, [ck * fk for ck, fk in zip(c_k, f_k)])
    h_out = [ok * math.tanh(ck) for ok, ck in zip(o, c_out)]
    return h_out, c_out


def multiway_oracle(x, children, p):
    """Gate LSTMs over the ordered child hidden states, then the gate loop.

    Composed from bilstm_run_oracle: the forget gate keeps the whole
    sequence, the other three use the last combined vector.  A leaf feeds
    zero vectors to the post-LSTM maps and has no forget terms.
    """
    x = list(map(float, x))
    d = len(p.bf)
    if children:
        hs = [list(map(float, h_k)) for h_k, _ in children]
        f_seq = bilstm_run_oracle(hs, p.lf.fwd, p.lf.bwd)
        u_last = bilstm_run_oracle(hs, p.lu.fwd, p.lu.bwd)[-1]
        i_last = bilstm_run_oracle(hs, p.li.fwd, p.li.bwd)[-1]
        o_last = bilstm_run_oracle(hs, p.lo.fwd, p.lo.bwd)[-1]
    else:
        zero2 = [0.0] * (2 * d)
        f_seq = []
        u_last = i_last = o_last = zero2
    u = [math.tanh(a + b + c) for a, b, c in zip(mv(p.wu, x), mv(p.uu, u_last), p.bu)]
    i = [sig(a + b + c) for a, b, c in zip(mv(p.wi, x), mv(p.ui, i_last), p.bi)]
    o = [sig(a + b + c) for a, b, c in zip(mv(p.wo, x), mv(p.uo, o_last), p.bo)]
    c_out = [ik * uk for ik, uk in zip(i, u)]
    for k, (_, c_k) in enumerate(children):
        f_k = [sig(a + b + c) for a, b, c in zip(mv(p.wf, x), mv(p.uf, f_seq[k]), p.bf)]
        c_out = vadd(c_out, [ck * fk for ck, fk in zip(c_k, f_k)])
    h_out = [ok * math.tanh(ck) for ok, ck in zip(o, c_out)]
    return h_out, c_out


def softmax_oracle(xs):
    m = max(xs)
    es = [math.exp(x - m) for x in xs]
    z = sum(es)
    return [e / z for e in es]


def attention_oracle(h_dec, enc_states, w_a, big_w):
    """Additive attention scores then softmax, all scalar loops."""
    scores = []
    for h_e in enc_states:
        cat = list(map(float, h_dec)) + list(map(float, h_e))
        t = [math.tanh(v) for v in mv(big_w, cat)]
        scores.append(sum(w * tv for w, tv in zip(w_a, t)))
    return softmax_oracle(scores)


def context_oracle(alpha, enc_states):
    d = len(enc_states[0])
    out = [0.0] * d
    for a, h in zip(alpha, enc_states):
        out = vadd(out, [a * float(v) for v in h])
    return out
