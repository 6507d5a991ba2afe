import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timeflex_lab.autodiff import (
    ComplexTensor,
    ContractError,
    DimensionError,
    ParameterError,
    Tape,
    Tensor,
    adaptive_avg_pool1d,
    add,
    affine,
    backward,
    causal_conv1d,
    complex_layer,
    concat,
    div,
    dropout,
    gradcheck,
    irdft,
    irdft2,
    linear_map,
    matmul,
    mean,
    mul,
    rdft,
    rdft2,
    relu,
    scale,
    sigmoid,
    sqrt,
    square,
    sub,
    tanh,
    transpose,
    tsum,
)
from timeflex_lab.autodiff.tensor import getitem, reshape


def naive_dft(x):
    """O(L^2) loop, full spectrum."""
    n = len(x)
    return np.array([sum(x[t] * complex(math.cos(2 * math.pi * k * t / n), -math.sin(2 * math.pi * k * t / n))
                         for t in range(n)) for k in range(n)])


def naive_dft2(x):
    """x: [L, C] real -> [L//2+1, C] complex; double loop over both axes."""
    L, C = x.shape
    out = np.zeros((L // 2 + 1, C), dtype=complex)
    for k in range(L // 2 + 1):
        for m in range(C):
            out[k, m] = sum(x[t, c] * np.exp(-2j * np.pi * (k * t / L + m * c / C))
                            for t in range(L) for c in range(C))
    return out


def T(a):
    return Tensor(np.array(a, dtype=float))


# ------------------------------------------------------------------ affine


def test_affine_examples():
    assert np.allclose(affine(T([1, 2]), T(np.eye(2)), T([0, 0])).data, [1, 2])
    assert np.allclose(affine(T([1, 2]), T(np.zeros((2, 2))), T([3, 4])).data, [3, 4])
    # [1,1] @ [[2,1],[1,2]] + 1 = [4,4]
    assert np.allclose(affine(T([1, 1]), T([[2, 1], [1, 2]]), T([1, 1])).data, [4, 4])


def test_affine_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(3,\).*\(2, 2\)"):
        affine(T([1, 2, 3]), T(np.eye(2)), T([0, 0]))


def test_affine_broadcasts_leading_dims():
    rng = np.random.default_rng(0)
    x, W, b = rng.normal(size=(4, 5, 3)), rng.normal(size=(3, 2)), rng.normal(size=2)
    assert np.allclose(affine(T(x), T(W), T(b)).data, x @ W + b)


# ------------------------------------------------------------------ causal conv


def test_causal_conv_examples():
    x = T([[[1, 2, 3]]])
    assert np.allclose(causal_conv1d(x, T([[[1]]]), T([0]), 1).data.ravel(), [1, 2, 3])
    assert np.allclose(causal_conv1d(x, T([[[0, 1]]]), T([0]), 1).data.ravel(), [0, 1, 2])
    impulse = T([[[1, 0, 0, 0, 0]]])
    assert np.allclose(causal_conv1d(impulse, T([[[1, 1]]]), T([0]), 2).data.ravel(), [1, 0, 1, 0, 0])


def direct_causal_conv(x, w, b, d):
    """Loop oracle: y[n,o,t] = b[o] + sum_{c,j} w[o,c,j] x[n,c,t-j*d]."""
    N, C, L = x.shape
    O, _, k = w.shape
    y = np.zeros((N, O, L))
    for n in range(N):
        for o in range(O):
            for t in range(L):
                acc = b[o]
                for c in range(C):
                    for j in range(k):
                        s = t - j * d
                        if s >= 0:
                            acc += w[o, c, j] * x[n, c, s]
                y[n, o, t] = acc
    return y


@pytest.mark.parametrize("k,d", [(1, 1), (2, 1), (3, 2), (3, 5)])
def test_causal_conv_matches_loop_oracle(k, d):
    rng = np.random.default_rng(k * 10 + d)
    x, w, b = rng.normal(size=(2, 3, 9)), rng.normal(size=(4, 3, k)), rng.normal(size=4)
    assert np.allclose(causal_conv1d(T(x), T(w), T(b), d).data, direct_causal_conv(x, w, b, d), atol=1e-12)


def test_causal_conv_tap_convention():
    # first tap multiplies the current sample, so w=[1,0] is the identity
    x = T([[[1, 2, 3]]])
    assert np.allclose(causal_conv1d(x, T([[[1, 0]]]), None, 1).data.ravel(), [1, 2, 3])


def test_causal_conv_grouped_weights():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 1, 7))  # N, G, C_in, L
    w = rng.normal(size=(3, 4, 1, 2))  # G, C_out, C_in, k
    b = rng.normal(size=(3, 4))
    out = causal_conv1d(T(x), T(w), T(b), 2).data
    for g in range(3):
        assert np.allclose(out[:, g], direct_causal_conv(x[:, g], w[g], b[g], 2))


def test_causal_conv_parameter_errors():
    with pytest.raises(ParameterError):
        causal_conv1d(T(np.ones((1, 1, 3))), T(np.ones((1, 1, 0))), None, 1)
    with pytest.raises(ParameterError):
        causal_conv1d(T(np.ones((1, 1, 3))), T(np.ones((1, 1, 2))), None, 0)
    with pytest.raises(DimensionError):
        causal_conv1d(T(np.ones((1, 2, 3))), T(np.ones((1, 1, 2))), None, 1)


@given(st.integers(0, 11), st.integers(1, 3), st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_causal_conv_causality(t, k, d):
    rng = np.random.default_rng(t)
    x = rng.normal(size=(1, 2, 12))
    w, b = T(rng.normal(size=(3, 2, k))), T(rng.normal(size=3))
    base = causal_conv1d(T(x), w, b, d).data
    x2 = x.copy()
    x2[0, 1, t] += 1.0
    moved = causal_conv1d(T(x2), w, b, d).data
    assert np.array_equal(base[..., :t], moved[..., :t])


# ------------------------------------------------------------------ elementwise


def test_elementwise_examples():
    assert tanh(T([0.0])).data[0] == 0.0
    assert sigmoid(T([0.0])).data[0] == 0.5
    assert np.allclose(mul(T([1, 2]), T([3, 4])).data, [3, 8])
    gated = mul(tanh(T([1.0])), sigmoid(T([1.0]))).data[0]
    assert abs(gated - 0.761594 * 0.731059) < 1e-6
    assert abs(gated - 0.556770) < 1e-6


def test_elementwise_shape_error():
    with pytest.raises(DimensionError):
        add(T([1, 2, 3]), T([1, 2]))


def test_scalar_broadcast():
    assert np.allclose(mul(T([1, 2]), T(3.0)).data, [3, 6])
    assert np.allclose(scale(T([1, 2]), 0.5).data, [0.5, 1.0])


# ------------------------------------------------------------------ pooling, dropout


def test_adaptive_pool_examples():
    x = T([[[1, 2, 3, 4]]])
    assert np.allclose(adaptive_avg_pool1d(x, 4).data.ravel(), [1, 2, 3, 4])
    assert np.allclose(adaptive_avg_pool1d(x, 2).data.ravel(), [1.5, 3.5])
    assert np.allclose(adaptive_avg_pool1d(x, 1).data.ravel(), [2.5])
    with pytest.raises(ParameterError):
        adaptive_avg_pool1d(x, 0)


def test_adaptive_pool_bins_overlap_when_not_divisible():
    # L=5 -> 2 bins: [0, 3) and [2, 5)
    out = adaptive_avg_pool1d(T([[1, 2, 3, 4, 5]]), 2).data.ravel()
    assert np.allclose(out, [2.0, 4.0])


def test_adaptive_pool_upsamples():
    out = adaptive_avg_pool1d(T([[1, 3]]), 4).data.ravel()
    assert np.allclose(out, [1, 1, 3, 3])


def test_dropout_examples():
    x = T([1.0, 2.0])
    assert dropout(x, 0.0, True, np.random.default_rng(0)) is x
    assert np.array_equal(dropout(x, 0.5, False).data, [1, 2])
    big = T(np.arange(1, 201, dtype=float))
    out = dropout(big, 0.5, True, np.random.default_rng(7)).data
    kept = out != 0
    assert 0 < kept.sum() < 200
    assert np.allclose(out[kept], 2 * big.data[kept])
    again = dropout(big, 0.5, True, np.random.default_rng(7)).data
    assert np.array_equal(out, again)
    with pytest.raises(ParameterError):
        dropout(x, 1.0, True, np.random.default_rng(0))


def test_dropout_expectation():
    x = np.array([0.5, -1.5, 2.0])
    rng = np.random.default_rng(11)
    trials = 100_000
    outs = np.stack([dropout(T(x), 0.3, True, rng).data for _ in range(trials)])
    se = outs.std(axis=0, ddof=1) / math.sqrt(trials)
    assert np.all(np.abs(outs.mean(axis=0) - x) < 3 * se)


def test_dropout_backward_uses_same_mask():
    x = Tensor(np.ones(50), requires_grad=True)
    with Tape():
        y = dropout(x, 0.4, True, np.random.default_rng(2))
        loss = tsum(y)
    backward(loss)
    assert np.array_equal(x.grad, y.data)


# ------------------------------------------------------------------ Fourier


def test_rdft_examples():
    X = rdft(T([1, 0, 0, 0]))
    assert np.allclose(X.numpy(), [1, 1, 1])
    X = rdft(T([1, 1, 1, 1]))
    assert np.allclose(X.numpy(), [4, 0, 0])


@pytest.mark.parametrize("n", [1, 2, 4, 5, 96])
def test_rdft_matches_naive(n):
    x = np.random.default_rng(n).normal(size=n)
    ref = naive_dft(x)[: n // 2 + 1]
    assert np.max(np.abs(rdft(T(x)).numpy() - ref)) < 1e-9
    assert np.max(np.abs(irdft(rdft(T(x)), n).data - x)) < 1e-9


def test_irdft_bin_mismatch():
    X = rdft(T(np.ones(8)))
    with pytest.raises(DimensionError):
        irdft(X, 10)


def test_rdft_along_axis():
    x = np.random.default_rng(0).normal(size=(3, 10, 2))
    X = rdft(T(x), axis=1).numpy()
    assert np.allclose(X, np.fft.rfft(x, axis=1))
    assert np.allclose(irdft(rdft(T(x), axis=1), 10, axis=1).data, x)


def test_irdft_ignores_hermitian_redundant_imag_parts():
    x = np.random.default_rng(1).normal(size=8)
    X = rdft(T(x))
    X.im.data[0] += 5.0
    X.im.data[-1] -= 3.0
    assert np.allclose(irdft(X, 8).data, x)


@pytest.mark.parametrize("n", [4, 5, 96])
def test_rdft2_matches_naive(n):
    x = np.random.default_rng(n).normal(size=(n, 3))
    X = rdft2(T(x), time_axis=0, var_axis=1).numpy()
    assert np.max(np.abs(X - naive_dft2(x))) < 1e-9
    back = irdft2(rdft2(T(x), 0, 1), n, 0, 1).data
    assert np.max(np.abs(back - x)) < 1e-9


def test_rdft2_batched_roundtrip():
    x = np.random.default_rng(5).normal(size=(1, 8, 3))
    X = rdft2(T(x), time_axis=1, var_axis=2)
    assert np.max(np.abs(irdft2(X, 8, 1, 2).data - x)) < 1e-9
    assert np.allclose(X.numpy(), np.fft.rfftn(x, axes=(2, 1)))


def test_rdft2_single_variate_is_rdft():
    x = np.random.default_rng(2).normal(size=(7, 1))
    assert np.allclose(rdft2(T(x), 0, 1).numpy(), rdft(T(x), axis=0).numpy(), atol=1e-12)


def test_rdft2_constant_field():
    x = np.full((2, 6, 3), 1.5)
    X = rdft2(T(x), 1, 2).numpy()
    assert np.allclose(X[:, 0, 0], 1.5 * 6 * 3)
    rest = X.copy()
    rest[:, 0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-12


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(1, 40))
@settings(max_examples=30, deadline=None)
def test_rdft_linearity(alpha, beta, n):
    rng = np.random.default_rng(n)
    x, y = rng.normal(size=n), rng.normal(size=n)
    lhs = rdft(T(alpha * x + beta * y)).numpy()
    rhs = alpha * rdft(T(x)).numpy() + beta * rdft(T(y)).numpy()
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.abs(lhs).max())


@given(st.integers(1, 64), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_parseval(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    half = rdft(T(x)).numpy()
    full = np.concatenate([half, np.conj(half[1 : (n + 1) // 2][::-1])])
    assert len(full) == n
    energy = np.sum(np.abs(full) ** 2) / n
    assert abs(energy - np.sum(x * x)) <= 1e-9 * max(np.sum(x * x), 1e-300)


def test_complex_layer_examples():
    z = ComplexTensor(T([1.0, 2.0]), T([3.0, -1.0]))
    ident = complex_layer(z, lambda t: t, lambda t: scale(t, 0.0))
    assert np.allclose(ident.numpy(), z.numpy())
    times_i = complex_layer(z, lambda t: scale(t, 0.0), lambda t: t)
    assert np.allclose(times_i.numpy(), 1j * z.numpy())
    one = ComplexTensor(T([1.0]), T([1.0]))
    prod = complex_layer(one, lambda t: scale(t, 2.0), lambda t: scale(t, 3.0))
    assert np.allclose(prod.numpy(), [-1 + 5j])
    assert np.allclose(prod.numpy(), (2 + 3j) * (1 + 1j))


def test_complex_tensor_shape_invariant():
    with pytest.raises(DimensionError):
        ComplexTensor(T([1.0]), T([1.0, 2.0]))


# ------------------------------------------------------------------ backward


def test_backward_examples():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with Tape():
        loss = tsum(x)
    backward(loss)
    assert np.array_equal(x.grad, [1, 1, 1])

    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape():
        loss = tsum(mul(x, x))
    backward(loss)
    assert np.array_equal(x.grad, [2, 4])


def test_backward_accumulates_on_repeat():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape():
        loss = tsum(square(x))
    backward(loss)
    backward(loss)
    assert np.array_equal(x.grad, [4, 8])


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape():
        y = scale(x, 2.0)
    with pytest.raises(ContractError):
        backward(y)


def test_backward_off_tape_is_contract_error():
    x = Tensor([1.0], requires_grad=True)
    with pytest.raises(ContractError):
        backward(tsum(x))


def test_untracked_tensor_never_gets_grad():
    x = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([3.0, 4.0])
    with Tape() as tape:
        loss = tsum(mul(x, c))
    backward(loss)
    assert c.grad is None
    assert np.array_equal(x.grad, [3, 4])
    assert all(n.parents for n in tape.nodes)


def test_no_tape_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    y = tanh(x)
    assert y.tape_id is None and not y.requires_grad


def test_tape_topological_order():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = relu(add(tanh(x), sigmoid(x)))
        tsum(mul(y, y))
    for node in tape.nodes:
        for p in node.parents:
            if p._tape is tape:
                assert p.tape_id < node.out.tape_id


def test_distinct_tapes_on_threads():
    from concurrent.futures import ThreadPoolExecutor

    def work(seed):
        x = Tensor(np.random.default_rng(seed).normal(size=5), requires_grad=True)
        with Tape():
            loss = tsum(square(tanh(x)))
        backward(loss)
        return x.grad, x.data

    with ThreadPoolExecutor(4) as ex:
        for g, d in ex.map(work, range(8)):
            t = np.tanh(d)
            assert np.allclose(g, 2 * t * (1 - t * t))


# ------------------------------------------------------------------ gradient checks (finite differences)


def rand(rng, *shape):
    return Tensor(rng.uniform(-2, 2, size=shape))


GRAD_CASES = {
    "affine": lambda r: ((x := rand(r, 3, 4), W := rand(r, 4, 2), b := rand(r, 2)), lambda: affine(x, W, b)),
    "matmul": lambda r: ((a := rand(r, 2, 3, 4), b := rand(r, 4, 5)), lambda: matmul(a, b)),
    "add": lambda r: ((a := rand(r, 3, 4), b := rand(r, 4)), lambda: add(a, b)),
    "sub": lambda r: ((a := rand(r, 3, 4), b := rand(r, 3, 1)), lambda: sub(a, b)),
    "mul": lambda r: ((a := rand(r, 3, 4), b := rand(r, 3, 4)), lambda: mul(a, b)),
    "scale": lambda r: ((a := rand(r, 5),), lambda: scale(a, -1.7)),
    "div": lambda r: ((a := rand(r, 4), b := Tensor(r.uniform(0.5, 2, size=4))), lambda: div(a, b)),
    "tanh": lambda r: ((a := rand(r, 6),), lambda: tanh(a)),
    "sigmoid": lambda r: ((a := rand(r, 6),), lambda: sigmoid(a)),
    "relu": lambda r: ((a := rand(r, 6),), lambda: relu(a)),
    "square": lambda r: ((a := rand(r, 6),), lambda: square(a)),
    "sqrt": lambda r: ((a := Tensor(r.uniform(0.5, 2, size=6)),), lambda: sqrt(a)),
    "mean": lambda r: ((a := rand(r, 3, 4),), lambda: mul(mean(a, axis=1, keepdims=True), a)),
    "reshape_transpose": lambda r: ((a := rand(r, 2, 3, 4),),
                                    lambda: mul(transpose(reshape(a, (6, 4)), (1, 0)), T(np.arange(24.0).reshape(4, 6)))),
    "getitem": lambda r: ((a := rand(r, 3, 5),), lambda: mul(getitem(a, (slice(None), slice(-1, None))), a)),
    "concat": lambda r: ((a := rand(r, 2, 3), b := rand(r, 2, 2)), lambda: square(concat([a, b], axis=1))),
    "linear_map": lambda r: ((a := rand(r, 2, 5, 3),), lambda: square(linear_map(a, np.arange(20.0).reshape(5, 4), axis=1))),
    "causal_conv1d": lambda r: ((x := rand(r, 2, 3, 7), w := rand(r, 4, 3, 3), b := rand(r, 4)),
                                lambda: square(causal_conv1d(x, w, b, 2))),
    "causal_conv1d_grouped": lambda r: ((x := rand(r, 2, 3, 1, 6), w := rand(r, 3, 2, 1, 2), b := rand(r, 3, 2)),
                                        lambda: square(causal_conv1d(x, w, b, 3))),
    "adaptive_avg_pool1d": lambda r: ((a := rand(r, 2, 7),), lambda: square(adaptive_avg_pool1d(a, 3))),
    "dropout": lambda r: ((a := rand(r, 20),),
                          lambda: square(dropout(a, 0.3, True, np.random.default_rng(4)))),
    "rdft": lambda r: ((a := rand(r, 2, 9),), lambda: add(square(rdft(a).re), rdft(a).im)),
    "irdft": lambda r: ((re := rand(r, 2, 5), im := rand(r, 2, 5)),
                        lambda: square(irdft(ComplexTensor(re, im), 8))),
    "rdft2": lambda r: ((a := rand(r, 6, 3),), lambda: add(square(rdft2(a, 0, 1).re), rdft2(a, 0, 1).im)),
    "irdft2": lambda r: ((re := rand(r, 4, 3), im := rand(r, 4, 3)),
                         lambda: square(irdft2(ComplexTensor(re, im), 6, 0, 1))),
    "complex_layer": lambda r: ((re := rand(r, 3, 2), im := rand(r, 3, 2), Wr := rand(r, 2, 2), Wi := rand(r, 2, 2)),
                                lambda: square(complex_layer(ComplexTensor(re, im),
                                                             lambda t: matmul(t, Wr), lambda t: matmul(t, Wi)).im)),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_gradient_matches_finite_differences(name):
    inputs, fn = GRAD_CASES[name](np.random.default_rng(zlib.crc32(name.encode())))
    assert gradcheck(fn, inputs, h=1e-3) < 1e-4
