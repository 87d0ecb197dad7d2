import math

import numpy as np
import pytest

from iaca import autodiff as ad
from iaca.autodiff import ShapeError, Tensor

from helpers import relative_error


def test_matmul_identity():
    b = np.arange(8.0).reshape(2, 4)
    out = ad.matmul(np.eye(2), b)
    np.testing.assert_array_equal(out.value, b)


def test_matmul_hand_case():
    out = ad.matmul([[1.0, 2.0], [3.0, 4.0]], [[1.0], [1.0]])
    np.testing.assert_array_equal(out.value, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as exc:
        ad.matmul(np.zeros((2, 3)), np.zeros((2, 3)))
    assert "(2, 3)" in str(exc.value)


def test_matmul_grad_of_sum_is_ones_times_bt():
    rng = np.random.default_rng(0)
    a_val = rng.normal(size=(3, 4))
    b_val = rng.normal(size=(4, 2))

    a = Tensor(a_val)
    out = ad.sum_all(ad.matmul(a, b_val))
    out.backward()
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b_val.T, atol=1e-12)

    fd = ad.finite_diff(lambda x: ad.matmul(Tensor(x), b_val).value.sum(), a_val, eps=1e-6)
    assert relative_error(a.grad, fd) < 1e-7


def test_matmul_associativity():
    rng = np.random.default_rng(1)
    a, b, c = rng.normal(size=(5, 4)), rng.normal(size=(4, 6)), rng.normal(size=(6, 3))
    left = ad.matmul(ad.matmul(a, b), c).value
    right = ad.matmul(a, ad.matmul(b, c)).value
    np.testing.assert_allclose(left, right, atol=1e-9)


def test_softmax_uniform_on_constant_column():
    out = ad.softmax(np.zeros((4, 1)), axis="columns")
    np.testing.assert_allclose(out.value, np.full((4, 1), 0.25), atol=1e-15)


def test_softmax_hand_case():
    out = ad.softmax(np.array([[math.log(1.0)], [math.log(3.0)]]), axis="columns")
    np.testing.assert_allclose(out.value, [[0.25], [0.75]], atol=1e-12)


def test_softmax_sharpening_limit():
    out = ad.softmax(np.array([[1.0], [2.0]]), axis="columns", temperature=0.01)
    np.testing.assert_allclose(out.value, [[0.0], [1.0]], atol=1e-8)


def test_softmax_rejects_bad_temperature():
    for t in (0.0, -1.0):
        with pytest.raises(ValueError):
            ad.softmax(np.ones((2, 2)), temperature=t)


def test_softmax_slices_sum_to_one_over_wide_range():
    rng = np.random.default_rng(2)
    for _ in range(50):
        m = rng.uniform(-700.0, 700.0, size=rng.integers(1, 9, size=2))
        cols = ad.softmax(m, axis="columns").value
        rows = ad.softmax(m, axis="rows").value
        np.testing.assert_allclose(cols.sum(axis=0), 1.0, atol=1e-9)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(cols >= 0.0) and np.all(rows >= 0.0)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(6, 5))
    base = ad.softmax(m, axis="columns").value
    shifted = ad.softmax(m + 13.5, axis="columns").value
    np.testing.assert_allclose(shifted, base, atol=1e-12)


def test_tanh_and_relu_basic():
    np.testing.assert_array_equal(ad.tanh(np.zeros((3, 3))).value, np.zeros((3, 3)))
    np.testing.assert_array_equal(ad.relu(np.array([[-1.0, 2.0]])).value, [[0.0, 2.0]])
    assert abs(ad.tanh(np.array([[1.0]])).value[0, 0] - 0.761594) < 1e-6


def test_elementwise_dispatch():
    m = np.array([[-1.0, 0.5]])
    np.testing.assert_array_equal(ad.elementwise(m, "relu").value, ad.relu(m).value)
    np.testing.assert_array_equal(ad.elementwise(m, "tanh").value, ad.tanh(m).value)
    with pytest.raises(ValueError):
        ad.elementwise(m, "sigmoid")


def test_relu_subgradient_at_zero_is_zero():
    x = Tensor(np.array([[0.0, -2.0, 3.0]]))
    out = ad.sum_all(ad.relu(x))
    out.backward()
    np.testing.assert_array_equal(x.grad, [[0.0, 0.0, 1.0]])


def test_hadamard_identity_and_shape_error():
    rng = np.random.default_rng(4)
    m = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(ad.hadamard(m, np.ones((3, 4))).value, m)
    with pytest.raises(ShapeError):
        ad.hadamard(np.ones((3, 4)), np.ones((4, 3)))


def test_concat_and_transpose_shapes():
    a, b = np.ones((3, 5)), np.zeros((3, 5))
    assert ad.concat_rows(a, b).shape == (6, 5)
    m = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(ad.transpose(ad.transpose(m)).value, m)


def test_tile_and_take_col():
    row = Tensor(np.array([[1.0, 2.0, 3.0]]))
    tiled = ad.tile_rows(row, 4)
    assert tiled.shape == (4, 3)
    out = ad.sum_all(tiled)
    out.backward()
    np.testing.assert_array_equal(row.grad, [[4.0, 4.0, 4.0]])

    m = Tensor(np.arange(6.0).reshape(2, 3))
    col = ad.take_col(m, 1)
    np.testing.assert_array_equal(col.value, [[1.0], [4.0]])
    ad.sum_all(col).backward()
    np.testing.assert_array_equal(m.grad, [[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])


def test_backward_sum_gives_ones():
    x = Tensor(np.random.default_rng(5).normal(size=(3, 4)))
    ad.sum_all(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_backward_sum_tanh_at_zero_gives_ones():
    x = Tensor(np.zeros((2, 5)))
    ad.sum_all(ad.tanh(x)).backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 5)))


def test_backward_rejects_non_scalar_seed():
    x = Tensor(np.ones((2, 2)))
    with pytest.raises(ValueError):
        (x + x).backward()


def test_backward_rejects_second_pass():
    x = Tensor(np.ones((2, 2)))
    out = ad.sum_all(ad.tanh(x))
    out.backward()
    with pytest.raises(RuntimeError):
        out.backward()
    # a fresh graph over the same leaf is also rejected: grads would double up
    with pytest.raises(RuntimeError):
        ad.sum_all(x).backward()


def test_finite_diff_sum_and_squares():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(3, 3))
    np.testing.assert_allclose(ad.finite_diff(lambda v: v.sum(), x), np.ones((3, 3)), atol=1e-9)
    fd = ad.finite_diff(lambda v: (v * v).sum(), np.array([[1.0, 2.0]]), eps=1e-5)
    np.testing.assert_allclose(fd, [[2.0, 4.0]], atol=1e-6)


# Randomized composite graphs: every leaf's backward gradient must agree with
# the finite-difference oracle. The program is generated once per case and
# re-executed from scratch for every probe, keeping the oracle independent.

_UNARY = ("tanh", "relu", "transpose", "softmax_cols", "softmax_rows")
_BINARY = ("add", "sub", "hadamard", "matmul", "concat_rows")


def _make_program(rng, n_leaves, n_ops):
    shapes = [tuple(rng.integers(1, 17, size=2)) for _ in range(n_leaves)]
    program = []
    pool = list(shapes)
    for _ in range(n_ops):
        op = rng.choice(_UNARY + _BINARY)
        if op in _UNARY:
            i = int(rng.integers(len(pool)))
            r, c = pool[i]
            program.append((op, i))
            pool.append((c, r) if op == "transpose" else (r, c))
        elif op == "matmul":
            pairs = [(i, j) for i, (_, ci) in enumerate(pool) for j, (rj, _) in enumerate(pool) if ci == rj]
            if not pairs:
                continue
            i, j = pairs[int(rng.integers(len(pairs)))]
            program.append((op, i, j))
            pool.append((pool[i][0], pool[j][1]))
        elif op == "concat_rows":
            pairs = [(i, j) for i, (_, ci) in enumerate(pool) for j, (_, cj) in enumerate(pool) if ci == cj]
            if not pairs:
                continue
            i, j = pairs[int(rng.integers(len(pairs)))]
            program.append((op, i, j))
            pool.append((pool[i][0] + pool[j][0], pool[i][1]))
        else:
            pairs = [(i, j) for i, si in enumerate(pool) for j, sj in enumerate(pool) if si == sj]
            if not pairs:
                continue
            i, j = pairs[int(rng.integers(len(pairs)))]
            program.append((op, i, j))
            pool.append(pool[i])
    return shapes, program


def _run_program(program, leaf_values):
    leaves = [Tensor(v) for v in leaf_values]
    pool = list(leaves)
    for op, *args in program:
        if op == "tanh":
            pool.append(ad.tanh(pool[args[0]]))
        elif op == "relu":
            pool.append(ad.relu(pool[args[0]]))
        elif op == "transpose":
            pool.append(ad.transpose(pool[args[0]]))
        elif op == "softmax_cols":
            pool.append(ad.softmax(pool[args[0]], axis="columns"))
        elif op == "softmax_rows":
            pool.append(ad.softmax(pool[args[0]], axis="rows"))
        elif op == "add":
            pool.append(ad.add(pool[args[0]], pool[args[1]]))
        elif op == "sub":
            pool.append(ad.sub(pool[args[0]], pool[args[1]]))
        elif op == "hadamard":
            pool.append(ad.hadamard(pool[args[0]], pool[args[1]]))
        elif op == "matmul":
            pool.append(ad.matmul(pool[args[0]], pool[args[1]]))
        elif op == "concat_rows":
            pool.append(ad.concat_rows(pool[args[0]], pool[args[1]]))
    total = ad.sum_all(ad.tanh(pool[-1]))
    for node in pool[:-1]:
        total = ad.add(total, ad.sum_all(ad.tanh(node)))
    return total, leaves


@pytest.mark.parametrize("case_seed", range(12))
def test_backward_matches_finite_diff_on_random_graphs(case_seed):
    rng = np.random.default_rng(1000 + case_seed)
    shapes, program = _make_program(rng, n_leaves=3, n_ops=6)
    leaf_values = [rng.normal(size=s) for s in shapes]

    out, leaves = _run_program(program, leaf_values)
    out.backward()

    for k in range(len(leaf_values)):
        def f(x, k=k):
            vals = [x if i == k else leaf_values[i] for i in range(len(leaf_values))]
            return _run_program(program, vals)[0].item()

        fd = ad.finite_diff(f, leaf_values[k], eps=1e-5)
        assert relative_error(leaves[k].grad, fd) < 1e-4
