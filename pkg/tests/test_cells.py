import numpy as np
import pytest

import codesumm.cells as cells_mod
from codesumm.asts import Ast, KIND_SYNTAX, Node, binarize
from codesumm.cells import (BiLstmParams, ChildSumParams, MultiWayParams,
                            NaryParams, child_sum_step, encode_tree,
                            init_child_sum, init_multiway, init_nary,
                            init_tree_cell, multiway_step, nary_step,
                            tree_cell_step)
from codesumm.lstm import LstmParams, LstmState, zero_state
from codesumm.tensor import Graph, ShapeError, grad_check

from oracles import child_sum_oracle, multiway_oracle, nary_oracle


def zero_lstm(d_in, d_out):
    z = lambda *s: np.zeros(s)
    return LstmParams(wf=z(d_out, d_in), wu=z(d_out, d_in), wi=z(d_out, d_in),
                      wo=z(d_out, d_in), uf=z(d_out, d_out), uu=z(d_out, d_out),
                      ui=z(d_out, d_out), uo=z(d_out, d_out), bf=z(d_out),
                      bu=z(d_out), bi=z(d_out), bo=z(d_out))


def zero_child_sum(d_in, d_out):
    z = lambda *s: np.zeros(s)
    return ChildSumParams(wf=z(d_out, d_in), wu=z(d_out, d_in), wi=z(d_out, d_in),
                          wo=z(d_out, d_in), uf=z(d_out, d_out), uu=z(d_out, d_out),
                          ui=z(d_out, d_out), uo=z(d_out, d_out), bf=z(d_out),
                          bu=z(d_out), bi=z(d_out), bo=z(d_out))


def zero_nary(d_in, d_out, arity=2):
    z = lambda *s: np.zeros(s)
    wide = arity * d_out
    return NaryParams(wf=z(d_out, d_in), wu=z(d_out, d_in), wi=z(d_out, d_in),
                      wo=z(d_out, d_in),
                      uf_k=[z(d_out, wide) for _ in range(arity)],
                      uu=z(d_out, wide), ui=z(d_out, wide), uo=z(d_out, wide),
                      bf=z(d_out), bu=z(d_out), bi=z(d_out), bo=z(d_out))


def zero_multiway(d_in, d_out):
    z = lambda *s: np.zeros(s)
    bl = lambda: BiLstmParams(fwd=zero_lstm(d_out, d_out), bwd=zero_lstm(d_out, d_out))
    return MultiWayParams(wf=z(d_out, d_in), wu=z(d_out, d_in), wi=z(d_out, d_in),
                          wo=z(d_out, d_in), lf=bl(), lu=bl(), li=bl(), lo=bl(),
                          uf=z(d_out, 2 * d_out), uu=z(d_out, 2 * d_out),
                          ui=z(d_out, 2 * d_out), uo=z(d_out, 2 * d_out),
                          bf=z(d_out), bu=z(d_out), bi=z(d_out), bo=z(d_out))


def random_states(g, rng, count, d):
    out = []
    vals = []
    for _ in range(count):
        h, c = rng.standard_normal(d), rng.standard_normal(d)
        out.append(LstmState(g.constant(h), g.constant(c)))
        vals.append((h, c))
    return out, vals


@pytest.mark.parametrize("make", [
    lambda: zero_child_sum(3, 4),
    lambda: zero_nary(3, 4),
    lambda: zero_multiway(3, 4),
])
def test_leaf_with_zero_params_is_zero(make):
    g = Graph()
    p = make()
    kids = []
    if isinstance(p, NaryParams):
        kids = [zero_state(g, 4), zero_state(g, 4)]
    st = tree_cell_step(g, g.constant(np.zeros(3)), kids, p)
    assert np.allclose(g.value(st.h), 0.0)
    assert np.allclose(g.value(st.c), 0.0)


def test_child_sum_is_permutation_invariant():
    rng = np.random.default_rng(10)
    p = init_child_sum(rng, 3, 4)
    x = rng.standard_normal(3)
    g = Graph()
    states, vals = random_states(g, rng, 4, 4)
    base = child_sum_step(g, g.constant(x), states, p)
    for _ in range(10):
        perm = rng.permutation(4)
        st = child_sum_step(g, g.constant(x), [states[k] for k in perm], p)
        assert np.max(np.abs(g.value(st.h) - g.value(base.h))) < 1e-12
        assert np.max(np.abs(g.value(st.c) - g.value(base.c))) < 1e-12


def test_child_sum_matches_scalar_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        p = init_child_sum(rng, 3, 4)
        x = rng.standard_normal(3)
        g = Graph()
        states, vals = random_states(g, rng, 3, 4)
        st = child_sum_step(g, g.constant(x), states, p)
        h_ref, c_ref = child_sum_oracle(x, vals, p)
        assert np.allclose(g.value(st.h), h_ref, atol=1e-12)
        assert np.allclose(g.value(st.c), c_ref, atol=1e-12)


def test_child_sum_leaf_matches_oracle():
    rng = np.random.default_rng(12)
    p = init_child_sum(rng, 3, 4)
    x = rng.standard_normal(3)
    g = Graph()
    st = child_sum_step(g, g.constant(x), [], p)
    h_ref, c_ref = child_sum_oracle(x, [], p)
    assert np.allclose(g.value(st.h), h_ref, atol=1e-12)


def test_nary_rejects_wrong_child_count():
    rng = np.random.default_rng(13)
    p = init_nary(rng, 3, 4, arity=2)
    g = Graph()
    states, _ = random_states(g, rng, 1, 4)
    with pytest.raises(ShapeError, match="arity"):
        nary_step(g, g.constant(np.zeros(3)), states, p)


def test_nary_is_order_sensitive():
    rng = np.random.default_rng(14)
    p = init_nary(rng, 3, 4, arity=2)
    x = rng.standard_normal(3)
    g = Graph()
    states, _ = random_states(g, rng, 2, 4)
    fwd = nary_step(g, g.constant(x), states, p)
    rev = nary_step(g, g.constant(x), states[::-1], p)
    assert np.max(np.abs(g.value(fwd.h) - g.value(rev.h))) > 1e-6


def test_nary_matches_scalar_oracle():
    rng = np.random.default_rng(15)
    for _ in range(20):
        p = init_nary(rng, 3, 4, arity=2)
        x = rng.standard_normal(3)
        g = Graph()
        states, vals = random_states(g, rng, 2, 4)
        st = nary_step(g, g.constant(x), states, p)
        h_ref, c_ref = nary_oracle(x, vals, p)
        assert np.allclose(g.value(st.h), h_ref, atol=1e-12)
        assert np.allclose(g.value(st.c), c_ref, atol=1e-12)


def test_multiway_is_order_sensitive():
    rng = np.random.default_rng(16)
    p = init_multiway(rng, 3, 4)
    x = rng.standard_normal(3)
    g = Graph()
    states, _ = random_states(g, rng, 2, 4)
    fwd = multiway_step(g, g.constant(x), states, p)
    rev = multiway_step(g, g.constant(x), states[::-1], p)
    assert np.max(np.abs(g.value(fwd.h) - g.value(rev.h))) > 1e-6


def test_multiway_matches_composed_oracle():
    rng = np.random.default_rng(17)
    for n_children in (0, 1, 2, 4):
        for _ in range(5):
            p = init_multiway(rng, 3, 4)
            x = rng.standard_normal(3)
            g = Graph()
            states, vals = random_states(g, rng, n_children, 4)
            st = multiway_step(g, g.constant(x), states, p)
            h_ref, c_ref = multiway_oracle(x, vals, p)
            assert np.allclose(g.value(st.h), h_ref, atol=1e-12)
            assert np.allclose(g.value(st.c), c_ref, atol=1e-12)


def test_multiway_single_child_sees_only_that_child():
    # with one child the gate sequence has length 1; the combined vector is
    # one forward step and one backward step over the same element
    rng = np.random.default_rng(18)
    p = init_multiway(rng, 3, 4)
    x = rng.standard_normal(3)
    h, c = rng.standard_normal(4), rng.standard_normal(4)
    g = Graph()
    child = LstmState(g.constant(h), g.constant(c))
    st = multiway_step(g, g.constant(x), [child], p)
    h_ref, c_ref = multiway_oracle(x, [(h, c)], p)
    assert np.allclose(g.value(st.h), h_ref, atol=1e-12)
    # independent of any global state: rebuilding from scratch agrees
    g2 = Graph()
    child2 = LstmState(g2.constant(h), g2.constant(c))
    st2 = multiway_step(g2, g2.constant(x), [child2], p)
    assert np.array_equal(g.value(st.h), g2.value(st2.h))


def chain_ast(depth):
    nodes = [Node(f"n{i}", KIND_SYNTAX, [i + 1] if i + 1 < depth else [])
             for i in range(depth)]
    return Ast(nodes, root=0)


def star_ast(leaves):
    nodes = [Node("root", KIND_SYNTAX, list(range(1, leaves + 1)))]
    nodes += [Node(f"leaf{i}", KIND_SYNTAX, []) for i in range(leaves)]
    return Ast(nodes, root=0)


def test_encode_single_node_tree_equals_leaf_step():
    rng = np.random.default_rng(19)
    p = init_multiway(rng, 3, 4)
    x = rng.standard_normal(3)
    ast = Ast([Node("only", KIND_SYNTAX, [])], root=0)
    g = Graph()
    layers = encode_tree(g, ast, {0: g.constant(x)}, [p])
    st = layers[-1][0]
    ref = multiway_step(g, g.constant(x), [], p)
    assert np.allclose(g.value(st.h), g.value(ref.h))
    assert len(layers) == 1 and set(layers[0]) == {0}


def test_shortcut_with_zero_second_layer_passes_through():
    rng = np.random.default_rng(20)
    first = init_multiway(rng, 4, 4)
    second = zero_multiway(4, 4)
    ast = star_ast(3)
    g = Graph()
    inputs = {i: g.constant(rng.standard_normal(4)) for i in range(len(ast))}
    layers = encode_tree(g, ast, inputs, [first, second], shortcut=True)
    for i in range(len(ast)):
        assert np.allclose(g.value(layers[1][i].h), g.value(layers[0][i].h))


def test_chain_tree_multiway_equals_oracle_fold():
    rng = np.random.default_rng(21)
    p = init_multiway(rng, 3, 4)
    ast = chain_ast(5)
    xs = {i: rng.standard_normal(3) for i in range(5)}
    g = Graph()
    layers = encode_tree(g, ast, {i: g.constant(x) for i, x in xs.items()}, [p])
    # fold the oracle bottom-up: node 4 is the deepest leaf
    h_ref, c_ref = multiway_oracle(xs[4], [], p)
    for i in (3, 2, 1, 0):
        h_ref, c_ref = multiway_oracle(xs[i], [(h_ref, c_ref)], p)
    assert np.allclose(g.value(layers[0][0].h), h_ref, atol=1e-10)


def test_encode_tree_touches_each_node_once_per_layer(monkeypatch):
    rng = np.random.default_rng(22)
    p1 = init_child_sum(rng, 4, 4)
    p2 = init_child_sum(rng, 4, 4)
    ast = star_ast(4)
    calls = []
    real = cells_mod.tree_cell_step

    def counting(g, x, children, p):
        calls.append(id(p))
        return real(g, x, children, p)

    monkeypatch.setattr(cells_mod, "tree_cell_step", counting)
    g = Graph()
    inputs = {i: g.constant(rng.standard_normal(4)) for i in range(len(ast))}
    encode_tree(g, ast, inputs, [p1, p2])
    assert len(calls) == 2 * len(ast)
    assert calls.count(id(p1)) == len(ast)
    assert calls.count(id(p2)) == len(ast)


def test_encode_binarized_tree_with_nary():
    rng = np.random.default_rng(23)
    p = init_nary(rng, 4, 4, arity=2)
    ast = binarize(star_ast(3))
    g = Graph()
    inputs = {i: g.constant(rng.standard_normal(4))
              for i in range(len(ast)) if not cells_mod.is_marker(ast.nodes[i])}
    layers = encode_tree(g, ast, inputs, [p])
    assert set(layers[0]) == set(inputs)  # markers get no state


def test_encode_rejects_wide_nodes_for_nary():
    rng = np.random.default_rng(24)
    p = init_nary(rng, 4, 4, arity=2)
    ast = star_ast(3)
    g = Graph()
    inputs = {i: g.constant(rng.standard_normal(4)) for i in range(len(ast))}
    with pytest.raises(ShapeError, match="binarize"):
        encode_tree(g, ast, inputs, [p])


def test_encode_dropout_needs_rng_only_when_training():
    rng = np.random.default_rng(25)
    p = init_child_sum(rng, 4, 4)
    ast = star_ast(2)
    g = Graph()
    inputs = {i: g.constant(rng.standard_normal(4)) for i in range(len(ast))}
    with pytest.raises(ValueError):
        encode_tree(g, ast, inputs, [p], dropout=0.5, training=True)
    encode_tree(g, ast, inputs, [p], dropout=0.5, training=False)


@pytest.mark.parametrize("kind", ["child_sum", "n_ary", "multi_way"])
def test_small_tree_encoding_gradient_check(kind):
    rng = np.random.default_rng(26)
    d = 3
    cell = init_tree_cell(kind, rng, d, d)
    ast = star_ast(2) if kind != "n_ary" else binarize(star_ast(2))
    node_inputs = {i: rng.standard_normal(d)
                   for i in range(len(ast)) if not cells_mod.is_marker(ast.nodes[i])}
    params = cell.named("cell")
    for i, v in node_inputs.items():
        params[f"x{i}"] = v
    weights = rng.standard_normal((1, d))

    def build(ps):
        g = Graph()
        inputs = {i: g.leaf(node_inputs[i]) for i in node_inputs}
        layers = encode_tree(g, ast, inputs, [cell])
        return g, g.matvec(g.constant(weights), layers[-1][ast.root].h)

    # eps=3e-4 keeps central-difference cancellation noise well below the
    # 1e-8 relative-error floor; at 1e-5 the noise alone reaches ~3e-4 on
    # coordinates whose true gradient is tiny
    assert grad_check(build, params, eps=3e-4) < 1e-4
