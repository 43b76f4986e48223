"""Transform correctness, adjoint consistency, and gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incfno import tape
from incfno.tape import DegenerateTargetError, Tape, evaluate, finite_diff_check, vjp


def dft_oracle_1d(x):
    """Direct O(N^2) summation, the independent reference for the FFT path."""
    n = len(x)
    out = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        acc = 0.0 + 0.0j
        for m in range(n):
            acc += x[m] * np.exp(-2j * np.pi * k * m / n)
        out[k] = acc
    return out


def idft_oracle_1d(x):
    n = len(x)
    out = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        acc = 0.0 + 0.0j
        for m in range(n):
            acc += x[m] * np.exp(2j * np.pi * k * m / n)
        out[k] = acc / n
    return out


def real_inner(a, b):
    return float(np.vdot(np.asarray(a).ravel(), np.asarray(b).ravel()).real)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class TestDft:
    def test_delta_gives_flat_spectrum(self):
        x = np.array([1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(evaluate("dft", x, axes=(0,)), np.ones(4), atol=1e-14)

    def test_constant_gives_dc_only(self):
        c = 0.7
        n = 6
        got = evaluate("dft", np.full(n, c), axes=(0,))
        want = np.zeros(n, dtype=np.complex128)
        want[0] = n * c
        np.testing.assert_allclose(got, want, atol=1e-13)

    def test_matches_direct_summation(self, rng):
        x = rng.standard_normal(8)
        np.testing.assert_allclose(evaluate("dft", x, axes=(0,)), dft_oracle_1d(x), atol=1e-12)

    def test_complex_input_matches_oracle(self, rng):
        x = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        np.testing.assert_allclose(evaluate("dft", x, axes=(0,)), dft_oracle_1d(x), atol=1e-12)

    def test_2d_matches_axiswise_oracle(self, rng):
        x = rng.standard_normal((4, 6))
        want = np.stack([dft_oracle_1d(row) for row in x])
        want = np.stack([dft_oracle_1d(col) for col in want.T]).T
        np.testing.assert_allclose(evaluate("dft", x, axes=(0, 1)), want, atol=1e-11)

    def test_non_power_of_two_extent(self, rng):
        x = rng.standard_normal(7)
        np.testing.assert_allclose(evaluate("dft", x, axes=(0,)), dft_oracle_1d(x), atol=1e-12)

    def test_axis_out_of_range(self):
        with pytest.raises(ValueError):
            evaluate("dft", np.zeros(4), axes=(1,))


class TestIdft:
    def test_round_trip(self, rng):
        x = rng.standard_normal(16)
        back = evaluate("idft", evaluate("dft", x, axes=(0,)), axes=(0,))
        assert np.max(np.abs(back - x)) < 1e-12

    def test_dc_spectrum_gives_constant_one(self):
        n = 8
        spec = np.zeros(n, dtype=np.complex128)
        spec[0] = n
        np.testing.assert_allclose(evaluate("idft", spec, axes=(0,)), np.ones(n), atol=1e-13)

    def test_matches_direct_summation(self, rng):
        x = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        np.testing.assert_allclose(evaluate("idft", x, axes=(0,)), idft_oracle_1d(x), atol=1e-12)

    def test_real_output_takes_real_part(self, rng):
        x = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        got = evaluate("idft", x, axes=(0,), real_output=True)
        assert got.dtype == np.float64
        np.testing.assert_allclose(got, idft_oracle_1d(x).real, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(min_value=1, max_value=1024), seed=st.integers(0, 2**32 - 1))
def test_round_trip_any_length(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    back = evaluate("idft", evaluate("dft", x, axes=(0,)), axes=(0,))
    assert np.max(np.abs(back - x)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(n=st.integers(min_value=1, max_value=256), seed=st.integers(0, 2**32 - 1))
def test_parseval(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    spec = evaluate("dft", x, axes=(0,))
    lhs = float(np.sum(np.abs(x) ** 2))
    rhs = float(np.sum(np.abs(spec) ** 2)) / n
    assert abs(lhs - rhs) <= 1e-10 * max(lhs, 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_linearity(seed):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal(32), r.standard_normal(32)
    a, b = r.standard_normal(2)
    lhs = evaluate("dft", a * x + b * y, axes=(0,))
    rhs = a * evaluate("dft", x, axes=(0,)) + b * evaluate("dft", y, axes=(0,))
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.max(np.abs(lhs)))


class TestRecord:
    def test_add_zeros(self):
        t = Tape()
        a = t.leaf(np.zeros((3, 2)))
        b = t.leaf(np.zeros((3, 2)))
        out = t.record("add", a, b)
        np.testing.assert_array_equal(out.value, np.zeros((3, 2)))

    def test_relu_clamps(self):
        t = Tape()
        out = t.record("relu", t.leaf(np.array([-1.0, 2.0])))
        np.testing.assert_array_equal(out.value, [0.0, 2.0])

    def test_mode_contract_matches_triple_loop(self, rng):
        n, m, cin, cout = 8, 5, 3, 2
        vhat = rng.standard_normal((n, cin)) + 1j * rng.standard_normal((n, cin))
        weights = rng.standard_normal((m, cin, cout)) + 1j * rng.standard_normal((m, cin, cout))

        # oracle: explicit loop over (mode slot, input channel, output channel)
        from incfno.modes import gather_indices

        idx = gather_indices(m, n)
        want = np.zeros((n, cout), dtype=np.complex128)
        for slot, k in enumerate(idx):
            for o in range(cout):
                for i in range(cin):
                    want[k, o] += vhat[k, i] * weights[slot, i, o]

        t = Tape()
        got = t.record("mode_contract", t.leaf(vhat), t.leaf(weights))
        np.testing.assert_allclose(got.value, want, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        t = Tape()
        with pytest.raises(ValueError):
            t.record("add", t.leaf(np.zeros(3)), t.leaf(np.zeros(4)))

    def test_operands_must_be_nodes(self):
        t = Tape()
        with pytest.raises(TypeError):
            t.record("relu", np.zeros(3))


class TestBackward:
    def test_hand_derived_relative_l2_gradient(self):
        # d/dp ||p - t|| / ||t|| = (p - t) / (||p - t|| ||t||); with
        # p=[1,2], t=[-1,-2] the denominator is sqrt(20)*sqrt(5) = 10.
        t = Tape()
        p = t.leaf(np.array([1.0, 2.0]), param="p")
        target = t.leaf(np.array([-1.0, -2.0]))
        loss = t.record("relative_l2", p, target)
        grads = t.backward(loss)
        np.testing.assert_allclose(grads["p"], [0.2, 0.4], atol=1e-14)

    def test_loss_independent_of_parameter(self):
        t = Tape()
        t.leaf(np.ones(3), param="unused")
        a = t.leaf(np.array([1.0, 1.0]), param="a")
        loss = t.record("relative_l2", a, t.leaf(np.array([2.0, 2.0])))
        grads = t.backward(loss)
        np.testing.assert_array_equal(grads["unused"], np.zeros(3))
        assert grads["a"].shape == (2,)

    def test_loss_must_be_scalar(self):
        t = Tape()
        a = t.leaf(np.ones(3), param="a")
        with pytest.raises(ValueError):
            t.backward(a)

    def test_fan_out_accumulates(self):
        t = Tape()
        p = t.leaf(np.array([1.0, 2.0]), param="p")
        doubled = t.record("add", p, p)
        loss = t.record("relative_l2", doubled, t.leaf(np.array([-1.0, -2.0])))
        grads = t.backward(loss)
        # composite map p -> 2p, then the hand-derived gradient above, chain
        # rule: 2 * (2p - t)/(||2p - t|| ||t||)
        diff = np.array([3.0, 6.0])
        want = 2.0 * diff / (np.linalg.norm(diff) * np.sqrt(5.0))
        np.testing.assert_allclose(grads["p"], want, atol=1e-14)


# ---------------------------------------------------------------------------
# adjoint dot-product test: <J u, w> == <u, J^T w> with independently
# derived directional derivatives (JVPs) on one side and the production
# adjoints on the other
# ---------------------------------------------------------------------------


def _jvp_instance_norm(x, gamma, beta, dx, dgamma, dbeta, eps):
    axes = tuple(range(x.ndim - 1))
    mu = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    dmu = dx.mean(axis=axes, keepdims=True)
    dvar = 2.0 * ((x - mu) * dx).mean(axis=axes, keepdims=True)
    dinv = -0.5 * inv**3 * dvar
    dxhat = (dx - dmu) * inv + (x - mu) * dinv
    return dgamma * xhat + gamma * dxhat + dbeta


def _jvp_relative_l2(pred, target, dp, dt):
    diff = pred - target
    a = np.linalg.norm(diff.ravel())
    b = np.linalg.norm(target.ravel())
    da = real_inner(diff, dp - dt) / a
    db = real_inner(target, dt) / b
    return da / b - a * db / b**2


def _dot_test_cases(rng):
    n, c = 8, 3
    x = rng.standard_normal((n, c)) + 0.5  # keep relu inputs off the kink
    z = rng.standard_normal((n, c)) + 1j * rng.standard_normal((n, c))
    w = rng.standard_normal((c, c))
    b = rng.standard_normal(c)
    gamma = rng.standard_normal(c) + 2.0
    beta = rng.standard_normal(c)
    r = rng.standard_normal((5, c, c)) + 1j * rng.standard_normal((5, c, c))
    target = rng.standard_normal((n, c)) + 1.0
    return [
        ("dft", (x,), {"axes": (0,)}),
        ("dft", (z,), {"axes": (0,)}),
        ("idft", (z,), {"axes": (0,)}),
        ("idft", (z,), {"axes": (0,), "real_output": True}),
        ("mode_contract", (z, r), {}),
        ("pointwise_linear", (x, w, b), {}),
        ("add", (z, z.copy()), {}),
        ("add", (x, x.copy()), {}),
        ("relu", (x,), {}),
        ("instance_norm", (x, gamma, beta), {"eps": 1e-6}),
        ("scalar_mul", (z,), {"scale": -1.7}),
        ("relative_l2", (x, target), {}),
    ]


def _jvp(prim, operands, dirs, attrs):
    if prim == "dft":
        return evaluate("dft", dirs[0], **attrs)
    if prim == "idft":
        return evaluate("idft", dirs[0].astype(np.complex128), **attrs)
    if prim == "mode_contract":
        z, r = operands
        dz, dr = dirs
        return evaluate("mode_contract", dz, r) + evaluate("mode_contract", z, dr)
    if prim == "pointwise_linear":
        x, w, b = operands
        dx, dw, db = dirs
        return dx @ w + x @ dw + db
    if prim == "add":
        return dirs[0] + dirs[1]
    if prim == "relu":
        return dirs[0] * (operands[0] > 0)
    if prim == "instance_norm":
        return _jvp_instance_norm(*operands, *dirs, eps=attrs["eps"])
    if prim == "scalar_mul":
        return dirs[0] * attrs["scale"]
    if prim == "relative_l2":
        return _jvp_relative_l2(*operands, *dirs)
    raise AssertionError(prim)


@pytest.mark.parametrize("case_index", range(12))
def test_adjoint_dot_product(case_index):
    rng = np.random.default_rng(42 + case_index)
    prim, operands, attrs = _dot_test_cases(rng)[case_index]
    dirs = tuple(
        (rng.standard_normal(op.shape) + 1j * rng.standard_normal(op.shape))
        if np.iscomplexobj(op)
        else rng.standard_normal(op.shape)
        for op in operands
    )
    out = evaluate(prim, *operands, **attrs)
    w_adj = (
        (rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape))
        if np.iscomplexobj(out)
        else rng.standard_normal(out.shape)
    )
    ju = _jvp(prim, operands, dirs, attrs)
    lhs = real_inner(ju, w_adj)
    pulled = vjp(prim, w_adj, out, operands, attrs)
    rhs = sum(real_inner(u, g) for u, g in zip(dirs, pulled) if g is not None)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)


class TestFiniteDiffCheck:
    def test_scalar_quadratic(self):
        def f(params):
            p = params["p"].reshape(-1)[0]
            return float(p * p), {"p": np.full((), 2.0 * p)}

        err = finite_diff_check(f, {"p": np.float64(3.0).reshape(())}, h=1e-6)
        assert err < 1e-9

    def test_constant_function(self):
        def f(params):
            return 5.0, {"p": np.zeros(3)}

        assert finite_diff_check(f, {"p": np.ones(3)}, h=1e-6) == 0.0

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            finite_diff_check(lambda p: (0.0, {}), {}, h=0.0)

    def test_taped_composition(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((8, 3))
        target = rng.standard_normal((8, 3))

        def f(params):
            t = Tape()
            xn = t.leaf(x)
            w = t.param_leaf("w", params["w"])
            b = t.param_leaf("b", params["b"])
            h = t.record("pointwise_linear", xn, w, b)
            h = t.record("relu", h)
            loss = t.record("relative_l2", h, t.leaf(target))
            return float(loss.value), t.backward(loss)

        params = {"w": rng.standard_normal((3, 3)), "b": rng.standard_normal(3)}
        assert finite_diff_check(f, params, h=1e-6) < 1e-5


def test_relative_l2_rejects_zero_target():
    with pytest.raises(DegenerateTargetError):
        evaluate("relative_l2", np.ones(3), np.zeros(3))


def test_complex_parameter_gradient_convention(rng):
    # descent on (re, im): for loss = || idft_real(R-scaled delta) - t ||
    # the finite-difference check below exercises a complex leaf end to end.
    n, c = 8, 2
    vhat = rng.standard_normal((n, c)) + 1j * rng.standard_normal((n, c))
    target = rng.standard_normal((n, c))

    def f(params):
        t = Tape()
        v = t.leaf(vhat)
        r = t.param_leaf("r", params["r"])
        y = t.record("mode_contract", v, r)
        u = t.record("idft", y, axes=(0,), real_output=True)
        loss = t.record("relative_l2", u, t.leaf(target))
        return float(loss.value), t.backward(loss)

    r0 = rng.standard_normal((4, c, c)) + 1j * rng.standard_normal((4, c, c))
    assert finite_diff_check(f, {"r": r0}, h=1e-6) < 1e-5
