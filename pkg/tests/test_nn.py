import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wallprobe.errors import InvalidArgument, ParseError, ShapeError, StateError
from wallprobe.nn import AdamState, LayerSpec, Network, adam_step, conv, dense, reshape, tconv
from wallprobe.nn.layers import activate, same_pad, tconv_crop


# --- independent loop oracles ---------------------------------------------

def naive_conv(x, W, b, stride):
    B, H, Wd, C = x.shape
    _, kh, kw, F = W.shape
    ho, ph, _ = same_pad(H, kh, stride[0])
    wo, pw, _ = same_pad(Wd, kw, stride[1])
    y = np.zeros((B, ho, wo, F))
    for n in range(B):
        for oi in range(ho):
            for oj in range(wo):
                for a in range(kh):
                    for c in range(kw):
                        i = oi * stride[0] + a - ph
                        j = oj * stride[1] + c - pw
                        if 0 <= i < H and 0 <= j < Wd:
                            y[n, oi, oj] += x[n, i, j] @ W[:, a, c, :]
    return y + b


def naive_tconv(x, W, b, stride):
    B, H, Wd, C = x.shape
    _, kh, kw, F = W.shape
    ho, ch = tconv_crop(H, kh, stride[0])
    wo, cw = tconv_crop(Wd, kw, stride[1])
    y = np.zeros((B, ho, wo, F))
    for n in range(B):
        for i in range(H):
            for j in range(Wd):
                for a in range(kh):
                    for c in range(kw):
                        oi = i * stride[0] + a - ch
                        oj = j * stride[1] + c - cw
                        if 0 <= oi < ho and 0 <= oj < wo:
                            y[n, oi, oj] += x[n, i, j] @ W[:, a, c, :]
    return y + b


geom = st.tuples(st.integers(1, 7), st.integers(1, 7), st.integers(1, 3), st.integers(1, 3),
                 st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))


@settings(max_examples=40, deadline=None)
@given(geom, st.integers(0, 2**31 - 1))
def test_conv_matches_loop(g, seed):
    H, Wd, C, F, kh, kw, sh, sw = g
    rng = np.random.default_rng(seed)
    net = Network([conv(F, (kh, kw), (sh, sw))], (H, Wd, C), seed=seed)
    net.params[0][1][:] = rng.standard_normal(F)
    x = rng.standard_normal((2, H, Wd, C))
    y, _ = net.forward(x)
    assert np.allclose(y, naive_conv(x, *net.params[0], (sh, sw)), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(geom, st.integers(0, 2**31 - 1))
def test_tconv_matches_loop(g, seed):
    H, Wd, C, F, kh, kw, sh, sw = g
    rng = np.random.default_rng(seed)
    net = Network([tconv(F, (kh, kw), (sh, sw))], (H, Wd, C), seed=seed)
    net.params[0][1][:] = rng.standard_normal(F)
    x = rng.standard_normal((2, H, Wd, C))
    y, _ = net.forward(x)
    assert y.shape == (2, H * sh, Wd * sw, F)
    assert np.allclose(y, naive_tconv(x, *net.params[0], (sh, sw)), atol=1e-12)


def test_same_geometry():
    assert same_pad(32, 3, 2)[0] == 16
    assert same_pad(7, 4, 3)[0] == 3
    assert tconv_crop(8, 4, 2) == (16, 1)


def test_activations():
    z = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
    assert np.allclose(activate("leaky_relu", z, 0.2), np.where(z > 0, z, 0.2 * z))
    assert np.allclose(activate("tanh", z, 0.2), np.tanh(z))
    assert np.allclose(activate("sigmoid", z, 0.2), 1 / (1 + np.exp(-z)))
    big = activate("sigmoid", np.array([-800.0, 800.0]), 0.2)
    assert np.all(np.isfinite(big)) and big[0] == 0.0 and big[1] == 1.0


# --- gradient checks ------------------------------------------------------

ACTS = ("leaky_relu", "tanh", "sigmoid", "none")


def random_net(seed):
    """Small random stack that exercises one of the layer kinds after optional reshapes."""
    rng = np.random.default_rng(seed)
    kind = ("dense", "conv", "tconv", "mixed")[seed % 4]
    act = ACTS[rng.integers(4)]
    if kind == "dense":
        n_in = int(rng.integers(1, 7))
        specs = [dense(int(rng.integers(1, 6)), act), dense(int(rng.integers(1, 4)), ACTS[rng.integers(4)])]
        return Network(specs, (n_in,), seed=seed)
    H, Wd, C = (int(v) for v in rng.integers(1, 5, size=3))
    k = tuple(int(v) for v in rng.integers(1, 4, size=2))
    s = tuple(int(v) for v in rng.integers(1, 4, size=2))
    F = int(rng.integers(1, 4))
    if kind == "conv":
        return Network([conv(F, k, s, act)], (H, Wd, C), seed=seed)
    if kind == "tconv":
        return Network([tconv(F, k, s, act)], (H, Wd, C), seed=seed)
    head = [dense(H * Wd * C, act), reshape(H, Wd, C), tconv(F, k, s, "leaky_relu"), conv(2, (3, 3), (2, 2), "tanh")]
    flat = int(np.prod(Network(head, (5,), seed=seed).output_shape))
    return Network(head + [reshape(flat), dense(1, "sigmoid")], (5,), seed=seed)


def _loss(net, x, R):
    y, _ = net.forward(x)
    return float(np.sum(y * R))


@pytest.mark.parametrize("seed", range(60))
def test_gradients_finite_difference(seed):
    rng = np.random.default_rng(1000 + seed)
    net = random_net(seed)
    for group in net.params:
        if group:
            group[1][:] = 0.1 * rng.standard_normal(group[1].shape)
    x = rng.standard_normal((3,) + net.input_shape)
    y, cache = net.forward(x)
    R = rng.standard_normal(y.shape)
    grads, dx = net.backward(cache, R)
    h = 1e-6

    def check(arr, g, idx):
        old = arr[idx]
        arr[idx] = old + h
        lp = _loss(net, x, R)
        arr[idx] = old - h
        lm = _loss(net, x, R)
        arr[idx] = old
        num = (lp - lm) / (2 * h)
        scale = max(abs(num), abs(g[idx]), 1e-3)
        assert abs(num - g[idx]) / scale < 1e-4, (idx, num, g[idx])

    for group, ggroup in zip(net.params, grads):
        for p, g in zip(group, ggroup):
            flat = rng.choice(p.size, size=min(p.size, 12), replace=False)
            for f in flat:
                check(p, g, np.unravel_index(f, p.shape))
    flat = rng.choice(x.size, size=min(x.size, 12), replace=False)
    for f in flat:
        idx = np.unravel_index(f, x.shape)
        old = x[idx]
        x[idx] = old + h
        lp = _loss(net, x, R)
        x[idx] = old - h
        lm = _loss(net, x, R)
        x[idx] = old
        num = (lp - lm) / (2 * h)
        assert abs(num - dx[idx]) / max(abs(num), abs(dx[idx]), 1e-3) < 1e-4


def test_input_grad_skip_matches():
    net = Network([reshape(2, 2, 1), conv(2, 2), reshape(8), dense(3, "tanh")], (4,), seed=3)
    x = np.random.default_rng(0).standard_normal((5, 4))
    _, c1 = net.forward(x)
    g1, dx = net.backward(c1, np.ones((5, 3)))
    _, c2 = net.forward(x)
    g2, none = net.backward(c2, np.ones((5, 3)), input_grad=False)
    assert none is None and dx.shape == (5, 4)
    for a, b in zip(g1, g2):
        for p, q in zip(a, b):
            assert np.array_equal(p, q)


# --- dropout ---------------------------------------------------------------

def test_dropout_inactive_at_inference():
    net = Network([dense(50, "tanh", dropout=0.5)], (4,), seed=1)
    x = np.ones((2, 4))
    assert np.array_equal(net.forward(x)[0], net.forward(x)[0])


def test_dropout_expectation_and_rate():
    net = Network([dense(400, "none", dropout=0.2)], (3,), seed=1)
    x = np.ones((1, 3))
    ref = net.forward(x)[0]
    outs = np.stack([net.forward(x, train=True, seed=s)[0] for s in range(400)])
    assert abs(np.mean(outs == 0) - 0.2) < 0.01
    # inverted dropout keeps the expectation
    assert np.allclose(outs.mean(axis=0), ref, atol=4 * np.abs(ref).max() * 0.5 / np.sqrt(400))


def test_dropout_backward_masks():
    net = Network([dense(30, "tanh", dropout=0.5)], (3,), seed=1)
    x = np.ones((1, 3))
    y, cache = net.forward(x, train=True, seed=7)
    grads, dx = net.backward(cache, np.ones_like(y))
    dropped = y[0] == 0
    assert np.all(grads[0][0][:, dropped] == 0)
    assert np.all(grads[0][1][dropped] == 0)


def test_dropout_seeded():
    net = Network([dense(30, "none", dropout=0.3)], (3,), seed=1)
    x = np.ones((1, 3))
    assert np.array_equal(net.forward(x, train=True, seed=5)[0], net.forward(x, train=True, seed=5)[0])


# --- state and shape errors -------------------------------------------------

def test_cache_discipline():
    a = Network([dense(2)], (3,), seed=0)
    b = Network([dense(2)], (3,), seed=0)
    _, cache = a.forward(np.ones((1, 3)))
    with pytest.raises(StateError):
        a.backward(None, np.ones((1, 2)))
    with pytest.raises(StateError):
        b.backward(cache, np.ones((1, 2)))
    a.touch()
    with pytest.raises(StateError):
        a.backward(cache, np.ones((1, 2)))


def test_shape_errors():
    with pytest.raises(ShapeError) as exc:
        Network([dense(2)], (3,)).forward(np.ones((1, 4)))
    assert "layer 0" in str(exc.value)
    with pytest.raises(ShapeError):
        Network([conv(2, 3)], (5,))
    with pytest.raises(ShapeError):
        Network([reshape(4, 4, 1)], (15,))
    with pytest.raises(ShapeError):
        Network([dense(2)], (3,)).forward(np.array([[1.0, np.nan, 0.0]]))
    with pytest.raises(InvalidArgument):
        dense(3, "relu6")
    with pytest.raises(InvalidArgument):
        dense(3, dropout=1.0)


def test_layer_text_round_trip():
    for s in (dense(7, "leaky_relu", 0.1, alpha=0.3), conv(4, (3, 2), (2, 1), "tanh"), tconv(2, 4, 2, "sigmoid"),
              reshape(4, 4, 2)):
        assert LayerSpec.from_text(s.to_text()) == s
    with pytest.raises(InvalidArgument):
        LayerSpec.from_text("dense units=3 colour=red")


def test_network_round_trip_bit_exact():
    from wallprobe import _container

    for dtype in ("float64", "float32"):
        net = Network([dense(16, "leaky_relu"), reshape(4, 4, 1), conv(2, 3, 2, "tanh")], (5,), seed=2, dtype=dtype)
        h, arrs = net.to_parts("g")
        raw = _container.dumps("TST", 1, h, arrs)
        h2, a2 = _container.loads(raw, "TST", 1)
        back = Network.from_parts(h2, a2, "g")
        assert back.dtype_name == dtype and back.specs == net.specs
        for g1, g2 in zip(net.params, back.params):
            for p, q in zip(g1, g2):
                assert p.dtype == q.dtype and p.tobytes() == q.tobytes()


def test_from_parts_errors():
    net = Network([dense(4)], (3,))
    h, arrs = net.to_parts("g")
    arrs = dict(arrs)
    with pytest.raises(ParseError):
        Network.from_parts(h, {}, "g")
    with pytest.raises(ParseError):
        Network.from_parts([], arrs, "g")
    bad = [(k, "x7" if k == "g.input" else v) for k, v in h]
    with pytest.raises(ParseError):
        Network.from_parts(bad, arrs, "g")
    arrs["g.p0.0"] = np.ones((2, 2))
    with pytest.raises(ParseError):
        Network.from_parts(h, arrs, "g")


def test_glorot_bounds_and_seed():
    a = Network([dense(50)], (30,), seed=4)
    b = Network([dense(50)], (30,), seed=4)
    lim = np.sqrt(6 / 80)
    assert np.array_equal(a.params[0][0], b.params[0][0])
    assert np.abs(a.params[0][0]).max() <= lim and np.abs(a.params[0][0]).max() > 0.9 * lim
    assert np.all(a.params[0][1] == 0)


def test_float32_network():
    net = Network([dense(4, "tanh")], (3,), dtype="float32")
    y, cache = net.forward(np.ones((2, 3)))
    assert y.dtype == np.float32
    grads, _ = net.backward(cache, np.ones_like(y))
    assert grads[0][0].dtype == np.float32


# --- Adam -----------------------------------------------------------------

@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.floats(1e-5, 1e-1))
def test_adam_first_step_closed_form(vals, lr):
    g = np.array(vals)
    p = np.linspace(-1, 1, g.size)
    start = p.copy()
    st_ = AdamState(lr=lr)
    adam_step([p], [g], st_)
    # bias correction makes the first step lr * g / (|g| + eps)
    assert np.allclose(p, start - lr * g / (np.abs(g) + 1e-8), rtol=0, atol=1e-6 * lr + 1e-15)


def test_adam_matches_reference_over_steps():
    rng = np.random.default_rng(0)
    shapes = [(70000,), (3, 5)]  # first array spans two update blocks
    params = [rng.standard_normal(s) for s in shapes]
    ref = [p.copy() for p in params]
    m = [np.zeros_like(p) for p in ref]
    v = [np.zeros_like(p) for p in ref]
    state = AdamState(lr=1e-3, beta1=0.8, beta2=0.95)
    for t in range(1, 6):
        grads = [rng.standard_normal(s) for s in shapes]
        adam_step(params, grads, state)
        for i, g in enumerate(grads):
            m[i] = 0.8 * m[i] + 0.2 * g
            v[i] = 0.95 * v[i] + 0.05 * g * g
            mh = m[i] / (1 - 0.8 ** t)
            vh = v[i] / (1 - 0.95 ** t)
            ref[i] = ref[i] - 1e-3 * mh / (np.sqrt(vh) + 1e-8)
    for p, r in zip(params, ref):
        assert np.allclose(p, r, rtol=0, atol=1e-12)
    assert state.t == 5


def test_adam_nested_and_errors():
    net = Network([dense(3), dense(2)], (4,), seed=0)
    _, cache = net.forward(np.ones((2, 4)))
    grads, _ = net.backward(cache, np.ones((2, 2)))
    before = net.params[0][0].copy()
    adam_step(net.params, grads, AdamState())
    assert not np.array_equal(before, net.params[0][0])
    with pytest.raises(ShapeError):
        adam_step([np.ones(3)], [np.ones(4)], AdamState())
    with pytest.raises(ShapeError):
        adam_step([np.ones(3)], [np.ones(3), np.ones(3)], AdamState())
    s = AdamState()
    adam_step([np.ones(3)], [np.ones(3)], s)
    with pytest.raises(ShapeError):
        adam_step([np.ones(4)], [np.ones(4)], s)
