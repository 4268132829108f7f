import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triadic import autodiff as ad
from triadic.errors import ConfigError, NumericError, ShapeError


def _single(op_builder, *values):
    """Run one op on fresh leaves; return (value, grads of sum(output))."""
    tape = ad.Tape()
    leaves = [tape.leaf(v) for v in values]
    out = op_builder(*leaves)
    loss = out if out.value.shape == () else ad.sum_all(out)
    grads = tape.backward(loss)
    return out.value, [grads[leaf.id] for leaf in leaves]


class TestForwardValues:
    def test_add_identity(self):
        value, _ = _single(ad.add, [1.0, 2.0], [0.0, 0.0])
        np.testing.assert_array_equal(value, [1.0, 2.0])

    def test_mul_elementwise(self):
        value, _ = _single(ad.mul_elementwise, [1.0, 2.0], [3.0, 4.0])
        np.testing.assert_array_equal(value, [3.0, 8.0])

    def test_scale(self):
        value, _ = _single(lambda a: ad.scale(a, 0.5), [2.0, 4.0])
        np.testing.assert_array_equal(value, [1.0, 2.0])

    def test_sub(self):
        value, _ = _single(ad.sub, [5.0, 1.0], [2.0, 3.0])
        np.testing.assert_array_equal(value, [3.0, -2.0])

    def test_minimum(self):
        value, _ = _single(ad.minimum, [1.0, 5.0], [2.0, 3.0])
        np.testing.assert_array_equal(value, [1.0, 3.0])

    def test_shape_mismatch(self):
        tape = ad.Tape()
        a = tape.leaf([1.0, 2.0])
        b = tape.leaf([1.0, 2.0, 3.0])
        with pytest.raises(ShapeError):
            ad.add(a, b)

    def test_trilinear_zero_map(self):
        w = np.zeros((2, 3, 3, 3))
        value, _ = _single(ad.contract_trilinear, w,
                           np.ones(3), np.ones(3), np.ones(3))
        np.testing.assert_array_equal(value, np.zeros(2))

    def test_trilinear_scalar_case(self):
        # d=1, W=2: out = 2 * 3 * 5 * 7 = 210
        w = np.full((1, 1, 1, 1), 2.0)
        value, _ = _single(ad.contract_trilinear, w, [3.0], [5.0], [7.0])
        np.testing.assert_array_equal(value, [210.0])

    def test_bilinear_scalar_case(self):
        w = np.ones((1, 1, 1))
        value, _ = _single(ad.contract_bilinear, w, [2.0], [3.0])
        np.testing.assert_array_equal(value, [6.0])

    def test_matvec_identity(self):
        v = np.array([0.3, -1.2, 4.0])
        value, _ = _single(ad.matvec, np.eye(3), v)
        np.testing.assert_array_equal(value, v)

    def test_matvec(self):
        value, _ = _single(ad.matvec, [[1.0, 2.0], [3.0, 4.0]], [1.0, 1.0])
        np.testing.assert_array_equal(value, [3.0, 7.0])

    def test_softmax3_uniform(self):
        value, _ = _single(ad.softmax3, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(value, [1 / 3, 1 / 3, 1 / 3], rtol=0, atol=1e-15)

    def test_softmax3_closed_form(self):
        value, _ = _single(ad.softmax3, np.log([1.0, 2.0, 4.0]))
        np.testing.assert_allclose(value, [1 / 7, 2 / 7, 4 / 7], rtol=0, atol=1e-15)

    def test_softmax3_large_logit_no_overflow(self):
        value, _ = _single(ad.softmax3, [1000.0, 0.0, 0.0])
        assert np.all(np.isfinite(value))
        np.testing.assert_allclose(value, [1.0, 0.0, 0.0], rtol=0, atol=1e-300)

    def test_softmax3_rejects_nonfinite(self):
        tape = ad.Tape()
        logits = tape.leaf([np.inf, 0.0, 0.0])
        with pytest.raises(NumericError):
            ad.softmax3(logits)

    def test_l2_norm_345(self):
        value, _ = _single(ad.l2_norm, [3.0, 4.0])
        assert value == 5.0

    def test_l2_norm_zero_vector(self):
        value, (grad,) = _single(ad.l2_norm, np.zeros(4))
        assert value == 0.0
        np.testing.assert_array_equal(grad, np.zeros(4))

    def test_sq_l2_norm_gradient(self):
        _, (grad,) = _single(ad.sq_l2_norm, [1.0, 2.0])
        np.testing.assert_array_equal(grad, [2.0, 4.0])

    def test_logsumexp(self):
        value, _ = _single(ad.logsumexp, np.log([1.0, 2.0, 4.0]))
        np.testing.assert_allclose(value, np.log(7.0), rtol=0, atol=1e-15)

    def test_nonlinearities(self):
        value, (grad,) = _single(lambda v: ad.nonlinearity(v, "identity"), [1.5, -2.0])
        np.testing.assert_array_equal(value, [1.5, -2.0])
        np.testing.assert_array_equal(grad, [1.0, 1.0])

        value, (grad,) = _single(lambda v: ad.nonlinearity(v, "tanh"), [0.0])
        assert value[0] == 0.0 and grad[0] == 1.0

        value, (grad,) = _single(lambda v: ad.nonlinearity(v, "relu"), [-2.0])
        assert value[0] == 0.0 and grad[0] == 0.0

    def test_unknown_nonlinearity(self):
        tape = ad.Tape()
        v = tape.leaf([1.0])
        with pytest.raises(ConfigError):
            ad.nonlinearity(v, "swish")

    def test_stack_and_index(self):
        tape = ad.Tape()
        v = tape.leaf([10.0, 20.0, 30.0])
        picked = ad.stack([ad.index(v, 2), ad.index(v, 0)])
        np.testing.assert_array_equal(picked.value, [30.0, 10.0])
        grads = tape.backward(ad.sum_all(picked))
        np.testing.assert_array_equal(grads[v.id], [1.0, 0.0, 1.0])

    def test_row_scatters_gradient(self):
        tape = ad.Tape()
        table = tape.leaf(np.arange(6.0).reshape(3, 2))
        loss = ad.sq_l2_norm(ad.row(table, 1))
        grads = tape.backward(loss)
        expected = np.zeros((3, 2))
        expected[1] = 2.0 * np.array([2.0, 3.0])
        np.testing.assert_array_equal(grads[table.id], expected)

    def test_smul(self):
        tape = ad.Tape()
        s = tape.leaf(3.0)
        v = tape.leaf([1.0, -2.0])
        out = ad.smul(s, v)
        np.testing.assert_array_equal(out.value, [3.0, -6.0])
        grads = tape.backward(ad.sum_all(out))
        assert grads[s.id] == -1.0
        np.testing.assert_array_equal(grads[v.id], [3.0, 3.0])


class TestBackward:
    def test_sq_norm_gradient(self):
        tape = ad.Tape()
        x = tape.leaf([1.0, 2.0])
        grads = tape.backward(ad.sq_l2_norm(x))
        np.testing.assert_array_equal(grads[x.id], [2.0, 4.0])

    def test_unreachable_leaf_gets_zeros(self):
        tape = ad.Tape()
        x = tape.leaf([1.0, 2.0])
        unused = tape.leaf(np.ones((2, 2)))
        grads = tape.backward(ad.sq_l2_norm(x))
        np.testing.assert_array_equal(grads[unused.id], np.zeros((2, 2)))

    def test_constant_loss_zero_grads(self):
        tape = ad.Tape()
        x = tape.leaf([1.0, 2.0])
        loss = ad.sum_all(tape.constant([7.0]))
        grads = tape.backward(loss)
        np.testing.assert_array_equal(grads[x.id], np.zeros(2))

    def test_non_scalar_loss_rejected(self):
        tape = ad.Tape()
        x = tape.leaf([1.0, 2.0])
        with pytest.raises(ShapeError):
            tape.backward(ad.scale(x, 2.0))

    def test_fanout_accumulates(self):
        # loss = x.x + x.x should give twice the single gradient
        tape = ad.Tape()
        x = tape.leaf([1.0, -3.0])
        loss = ad.add(ad.sq_l2_norm(x), ad.sq_l2_norm(x))
        grads = tape.backward(loss)
        np.testing.assert_array_equal(grads[x.id], [4.0, -12.0])

    def test_deterministic_bit_identical(self):
        def run():
            rng = np.random.default_rng(7)
            tape = ad.Tape()
            w = tape.leaf(rng.standard_normal((3, 4, 4, 4)))
            x = tape.leaf(rng.standard_normal(4))
            y = tape.leaf(rng.standard_normal(4))
            z = tape.leaf(rng.standard_normal(4))
            out = ad.nonlinearity(ad.contract_trilinear(w, x, y, z), "tanh")
            grads = tape.backward(ad.sq_l2_norm(out))
            return {k: v.copy() for k, v in grads.items()}

        first, second = run(), run()
        assert first.keys() == second.keys()
        for k in first:
            assert np.array_equal(first[k], second[k])  # bitwise


# Finite-difference sweep: every op, random inputs in U[-1,1].
# Each case is (name, builder taking named leaves, param shapes).
_FD_CASES = [
    ("add", lambda p: ad.sum_all(ad.mul_elementwise(ad.add(p["a"], p["b"]), p["a"])),
     {"a": (5,), "b": (5,)}),
    ("sub_neg", lambda p: ad.sq_l2_norm(ad.neg(ad.sub(p["a"], p["b"]))),
     {"a": (4,), "b": (4,)}),
    ("mul", lambda p: ad.sq_l2_norm(ad.mul_elementwise(p["a"], p["b"])),
     {"a": (5,), "b": (5,)}),
    ("scale", lambda p: ad.sq_l2_norm(ad.scale(p["a"], -1.7)), {"a": (6,)}),
    ("dot", lambda p: ad.dot(p["a"], p["b"]), {"a": (7,), "b": (7,)}),
    ("smul", lambda p: ad.sq_l2_norm(ad.smul(ad.dot(p["a"], p["a"]), p["b"])),
     {"a": (3,), "b": (4,)}),
    ("matvec", lambda p: ad.sq_l2_norm(ad.matvec(p["w"], p["v"])),
     {"w": (3, 4), "v": (4,)}),
    ("bilinear", lambda p: ad.sq_l2_norm(ad.contract_bilinear(p["w"], p["a"], p["b"])),
     {"w": (2, 3, 3), "a": (3,), "b": (3,)}),
    ("trilinear", lambda p: ad.sq_l2_norm(
        ad.contract_trilinear(p["w"], p["x"], p["y"], p["z"])),
     {"w": (2, 3, 3, 3), "x": (3,), "y": (3,), "z": (3,)}),
    ("softmax3", lambda p: ad.dot(ad.softmax3(p["l"]), p["v"]),
     {"l": (3,), "v": (3,)}),
    ("logsumexp", lambda p: ad.logsumexp(p["v"]), {"v": (6,)}),
    ("l2_norm", lambda p: ad.l2_norm(p["v"]), {"v": (5,)}),
    ("sq_l2_norm", lambda p: ad.sq_l2_norm(p["v"]), {"v": (5,)}),
    ("tanh", lambda p: ad.sq_l2_norm(ad.nonlinearity(p["v"], "tanh")), {"v": (5,)}),
    ("relu", lambda p: ad.sq_l2_norm(ad.nonlinearity(p["v"], "relu")), {"v": (5,)}),
    ("minimum", lambda p: ad.sq_l2_norm(ad.minimum(p["a"], p["b"])),
     {"a": (5,), "b": (5,)}),
    ("stack_index", lambda p: ad.sq_l2_norm(ad.stack(
        [ad.index(p["v"], 0), ad.index(p["v"], 2), ad.dot(p["v"], p["v"])])),
     {"v": (4,)}),
    ("row", lambda p: ad.sq_l2_norm(ad.add(ad.row(p["m"], 0), ad.row(p["m"], 2))),
     {"m": (3, 4)}),
]


@pytest.mark.parametrize("name,builder,shapes", _FD_CASES, ids=[c[0] for c in _FD_CASES])
def test_finite_difference_sweep(name, builder, shapes):
    """Analytic gradients match central differences on 100 random inputs."""
    rng = np.random.default_rng(hash(name) % 2**32)
    worst = 0.0
    for _ in range(100):
        params = {k: rng.uniform(-1.0, 1.0, size=s) for k, s in shapes.items()}
        if name in ("relu", "minimum"):
            # keep a margin from the kink so FD stays two-sided valid
            for v in params.values():
                v[np.abs(v) < 1e-3] += 0.01
        report = ad.grad_check(lambda t, le: builder(le), params, step=1e-5, tol=1e-4)
        worst = max(worst, report["max_rel_error"])
    assert worst < 1e-4, f"{name}: max relative error {worst:.3e}"


def test_trilinear_linearity_per_argument():
    rng = np.random.default_rng(3)
    w = rng.standard_normal((2, 4, 4, 4))
    vecs = [rng.standard_normal(4) for _ in range(4)]

    def f(x, y, z):
        value, _ = _single(ad.contract_trilinear, w, x, y, z)
        return value

    x1, x2, y, z = vecs
    np.testing.assert_allclose(f(x1 + x2, y, z), f(x1, y, z) + f(x2, y, z),
                               rtol=0, atol=1e-12)
    np.testing.assert_allclose(f(y, x1 + x2, z), f(y, x1, z) + f(y, x2, z),
                               rtol=0, atol=1e-12)
    np.testing.assert_allclose(f(y, z, x1 + x2), f(y, z, x1) + f(y, z, x2),
                               rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3),
       st.permutations([0, 1, 2]))
def test_softmax3_permutation_equivariance(logits, perm):
    out, _ = _single(ad.softmax3, logits)
    assert abs(out.sum() - 1.0) < 1e-12
    permuted, _ = _single(ad.softmax3, np.asarray(logits)[perm])
    np.testing.assert_allclose(permuted, out[perm], rtol=0, atol=1e-12)


class TestGradCheck:
    def test_quadratic_passes_tight(self):
        params = {"x": np.array([0.3, -1.1, 2.0])}
        report = ad.grad_check(lambda t, le: ad.sq_l2_norm(le["x"]),
                               params, tol=1e-6)
        assert report["pass"], report

    def test_detects_wrong_adjoint(self):
        """The checker must fail when an adjoint rule is deliberately broken."""
        params = {"x": np.array([0.4, -0.2, 0.9])}

        def loss(tape, leaves):
            return ad.sq_l2_norm(ad.nonlinearity(leaves["x"], "tanh"))

        assert ad.grad_check(loss, params)["pass"]
        with ad.inject_tanh_adjoint_bug():
            report = ad.grad_check(loss, params)
        assert not report["pass"]
        assert report["max_rel_error"] > 0.1

    def test_attention_style_score(self):
        """Softmax-weighted combination through a norm: the hardest chain here."""
        rng = np.random.default_rng(11)
        params = {name: rng.uniform(-1, 1, 8) for name in ("u", "x", "y", "z")}

        def loss(tape, le):
            logits = ad.stack([ad.dot(le["u"], le[a]) for a in ("x", "y", "z")])
            alpha = ad.softmax3(logits)
            out = ad.add(ad.add(ad.smul(ad.index(alpha, 0), le["x"]),
                                ad.smul(ad.index(alpha, 1), le["y"])),
                         ad.smul(ad.index(alpha, 2), le["z"]))
            return ad.sq_l2_norm(out)

        report = ad.grad_check(loss, params, tol=1e-4)
        assert report["pass"], report

    def test_coordinate_subsampling(self):
        rng = np.random.default_rng(5)
        params = {"w": rng.uniform(-1, 1, (4, 5, 5, 5)), "x": rng.uniform(-1, 1, 5),
                  "y": rng.uniform(-1, 1, 5), "z": rng.uniform(-1, 1, 5)}

        def loss(tape, le):
            return ad.sq_l2_norm(ad.contract_trilinear(le["w"], le["x"], le["y"], le["z"]))

        report = ad.grad_check(loss, params, max_coords_per_param=20,
                               rng=np.random.default_rng(0))
        assert report["pass"], report
        assert set(report["per_param"]) == {"w", "x", "y", "z"}
