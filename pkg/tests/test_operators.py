import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triadic import autodiff as ad
from triadic import operators as ops
from triadic.errors import ConfigError


def zero_params(spec, num_entities=4, num_relations=2):
    return {name: np.zeros(shape)
            for name, shape in ops.param_shapes(spec, num_entities, num_relations).items()}


def eval_op(spec, params, x, y, z, gamma=0):
    tape = ad.Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    out = ops.apply_ternary(spec, leaves,
                            tape.constant(x), tape.constant(y), tape.constant(z), gamma)
    return out.value


class TestSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            ops.TernaryOpSpec(kind="quaternion", dim=4)

    def test_bad_dim(self):
        with pytest.raises(ConfigError):
            ops.TernaryOpSpec(kind="oracle_hadamard", dim=0)

    def test_cp_rank_only_for_tensor_fusion(self):
        with pytest.raises(ConfigError):
            ops.TernaryOpSpec(kind="attention_aggregation", dim=4, cp_rank=3)

    def test_monoid_tags(self):
        assert ops.TernaryOpSpec("oracle_tropical", 2).monoid == "min"
        assert ops.TernaryOpSpec("oracle_hadamard", 2).monoid == "sum"

    def test_scalar_output_flag(self):
        assert ops.TernaryOpSpec("baseline_trilinear_diag", 2).scalar_output
        assert not ops.TernaryOpSpec("tensor_fusion", 2).scalar_output


class TestTensorFusion:
    def test_zero_weights_tanh_gives_zero(self):
        spec = ops.TernaryOpSpec("tensor_fusion", dim=3, nonlinearity="tanh")
        params = zero_params(spec)
        out = eval_op(spec, params, np.ones(3), -np.ones(3), np.ones(3))
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_scalar_trilinear_case(self):
        # d=1, identity sigma, W1=2, everything else zero: 2*3*5*7 = 210
        spec = ops.TernaryOpSpec("tensor_fusion", dim=1, nonlinearity="identity")
        params = zero_params(spec)
        params["W1"][0, 0, 0, 0] = 2.0
        out = eval_op(spec, params, [3.0], [5.0], [7.0])
        np.testing.assert_array_equal(out, [210.0])

    def test_identity_config_is_trilinear_in_x(self):
        spec = ops.TernaryOpSpec("tensor_fusion", dim=4, nonlinearity="identity")
        rng = np.random.default_rng(0)
        params = zero_params(spec)
        params["W1"] = rng.standard_normal((4, 4, 4, 4))
        x1, x2, y, z = (rng.standard_normal(4) for _ in range(4))
        lhs = eval_op(spec, params, x1 + x2, y, z)
        rhs = eval_op(spec, params, x1, y, z) + eval_op(spec, params, x2, y, z)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-10)

    def test_unknown_relation_raises(self):
        spec = ops.TernaryOpSpec("tensor_fusion", dim=2)
        params = zero_params(spec, num_relations=2)
        with pytest.raises(IndexError):
            eval_op(spec, params, np.ones(2), np.ones(2), np.ones(2), gamma=5)

    def test_cp_matches_materialized_dense(self):
        d, r = 3, 5
        spec_cp = ops.TernaryOpSpec("tensor_fusion", dim=d, nonlinearity="tanh", cp_rank=r)
        params = ops.init_params(spec_cp, num_entities=4, num_relations=2, seed=9)
        dense = dict(params)
        for key in ("W1_fx", "W1_fy", "W1_fz", "W1_out"):
            del dense[key]
        dense["W1"] = ops.materialize_cp(params)
        spec_dense = ops.TernaryOpSpec("tensor_fusion", dim=d, nonlinearity="tanh")
        rng = np.random.default_rng(1)
        for _ in range(5):
            x, y, z = (rng.standard_normal(d) for _ in range(3))
            np.testing.assert_allclose(eval_op(spec_cp, params, x, y, z),
                                       eval_op(spec_dense, dense, x, y, z),
                                       rtol=0, atol=1e-12)


class TestAttentionAggregation:
    def test_zero_key_gives_mean(self):
        spec = ops.TernaryOpSpec("attention_aggregation", dim=3)
        params = zero_params(spec)
        x, y, z = np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0])
        np.testing.assert_allclose(eval_op(spec, params, x, y, z),
                                   (x + y + z) / 3, rtol=0, atol=1e-15)

    def test_identical_arguments_fixed_point(self):
        spec = ops.TernaryOpSpec("attention_aggregation", dim=3)
        params = zero_params(spec)
        params["u"][0] = [2.0, -1.0, 0.5]
        v = np.array([0.3, -0.7, 1.1])
        np.testing.assert_allclose(eval_op(spec, params, v, v, v), v,
                                   rtol=0, atol=1e-15)

    def test_closed_form_d1(self):
        spec = ops.TernaryOpSpec("attention_aggregation", dim=1)
        params = zero_params(spec)
        params["u"][0] = [1.0]
        out = eval_op(spec, params, [0.0], [np.log(2)], [np.log(4)])
        expected = (2 * np.log(2) + 4 * np.log(4)) / 7
        np.testing.assert_allclose(out, [expected], rtol=0, atol=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_output_in_convex_hull(self, seed):
        rng = np.random.default_rng(seed)
        d = 4
        spec = ops.TernaryOpSpec("attention_aggregation", dim=d)
        params = zero_params(spec)
        params["u"][0] = rng.standard_normal(d)
        x, y, z = (rng.standard_normal(d) for _ in range(3))
        out = eval_op(spec, params, x, y, z)
        logits = np.array([params["u"][0] @ a for a in (x, y, z)])
        e = np.exp(logits - logits.max())
        alpha = e / e.sum()
        assert np.all(alpha >= 0) and abs(alpha.sum() - 1) < 1e-12
        np.testing.assert_allclose(out, alpha[0] * x + alpha[1] * y + alpha[2] * z,
                                   rtol=0, atol=1e-12)


class TestOracles:
    def test_hadamard_value(self):
        spec = ops.TernaryOpSpec("oracle_hadamard", dim=2)
        params = zero_params(spec)
        params["g"][0] = [1.0, 1.0]
        out = eval_op(spec, params, [1.0, 2.0], [3.0, 4.0], [5.0, 6.0])
        np.testing.assert_array_equal(out, [15.0, 48.0])

    def test_hadamard_absorbing_zero(self):
        spec = ops.TernaryOpSpec("oracle_hadamard", dim=2)
        params = ops.init_params(spec, 4, 2, seed=0)
        out = eval_op(spec, params, [0.0, 0.0], [3.0, 4.0], [5.0, 6.0])
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_tropical_value(self):
        spec = ops.TernaryOpSpec("oracle_tropical", dim=1)
        params = zero_params(spec)
        params["g"][0] = [4.0]
        np.testing.assert_array_equal(eval_op(spec, params, [1.0], [2.0], [3.0]), [10.0])

    def test_tropical_zero(self):
        spec = ops.TernaryOpSpec("oracle_tropical", dim=3)
        params = zero_params(spec)
        out = eval_op(spec, params, np.zeros(3), np.zeros(3), np.zeros(3))
        np.testing.assert_array_equal(out, np.zeros(3))


class TestBaselines:
    def test_cascaded_zero_map(self):
        spec = ops.TernaryOpSpec("baseline_cascaded_binary", dim=2)
        params = zero_params(spec)
        out = eval_op(spec, params, np.ones(2), np.ones(2), np.ones(2))
        np.testing.assert_array_equal(out, np.zeros(2))

    def test_cascaded_scalar_composition(self):
        # d=1, B=2: y(x)z = 2yz, then x(x)(y(x)z) = 2*x*2yz = 4xyz
        spec = ops.TernaryOpSpec("baseline_cascaded_binary", dim=1)
        params = zero_params(spec)
        params["B"][0, 0, 0] = 2.0
        np.testing.assert_array_equal(eval_op(spec, params, [1.0], [1.0], [1.0]), [4.0])

    def test_cascade_order_matters(self):
        """(x(x)y)(x)z differs from x(x)(y(x)z) for a generic bilinear map."""
        rng = np.random.default_rng(2)
        B = rng.standard_normal((3, 3, 3))
        x, y, z = (rng.standard_normal(3) for _ in range(3))
        right = np.einsum("oij,i,j->o", B, x, np.einsum("oij,i,j->o", B, y, z))
        left = np.einsum("oij,i,j->o", B, np.einsum("oij,i,j->o", B, x, y), z)
        assert np.linalg.norm(left - right) > 1e-3

    def test_trilinear_diag_value(self):
        spec = ops.TernaryOpSpec("baseline_trilinear_diag", dim=2)
        params = zero_params(spec)
        out = eval_op(spec, params, [1.0, 2.0], [1.0, 1.0], [3.0, 4.0])
        assert out == 11.0

    def test_trilinear_diag_zero_argument(self):
        spec = ops.TernaryOpSpec("baseline_trilinear_diag", dim=3)
        params = zero_params(spec)
        assert eval_op(spec, params, np.zeros(3), np.ones(3), np.ones(3)) == 0.0

    def test_trilinear_diag_head_tail_symmetry(self):
        # diagonal form cannot tell x from z; a known limitation
        spec = ops.TernaryOpSpec("baseline_trilinear_diag", dim=3)
        params = zero_params(spec)
        rng = np.random.default_rng(3)
        x, y, z = (rng.standard_normal(3) for _ in range(3))
        np.testing.assert_allclose(eval_op(spec, params, x, y, z),
                                   eval_op(spec, params, z, y, x),
                                   rtol=0, atol=1e-15)


class TestInitialization:
    def test_deterministic(self):
        spec = ops.TernaryOpSpec("tensor_fusion", dim=4)
        a = ops.init_params(spec, 10, 3, seed=5)
        b = ops.init_params(spec, 10, 3, seed=5)
        assert a.keys() == b.keys()
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

    def test_embeddings_not_degenerate(self):
        spec = ops.TernaryOpSpec("tensor_fusion", dim=8)
        params = ops.init_params(spec, 10, 3, seed=0)
        for name in ("entities", "relations", "g", "W1", "W2", "W3"):
            assert np.linalg.norm(params[name]) > 0
        np.testing.assert_array_equal(params["b"], np.zeros_like(params["b"]))

    def test_weight_ranges(self):
        spec = ops.TernaryOpSpec("tensor_fusion", dim=4)
        params = ops.init_params(spec, 10, 3, seed=0)
        a = np.sqrt(6.0 / (4 ** 3 + 4))
        assert np.max(np.abs(params["W1"])) <= a

    def test_shapes_per_kind(self):
        for kind in ops.KINDS:
            spec = ops.TernaryOpSpec(kind, dim=3)
            params = ops.init_params(spec, num_entities=7, num_relations=2, seed=1)
            assert params["entities"].shape == (7, 3)
            assert params["relations"].shape == (2, 3)


@pytest.mark.parametrize("kind", ops.KINDS)
def test_every_operator_gradchecks(kind):
    """grad_check on ||op(x,y,z)||^2 with all params learnable."""
    spec = ops.TernaryOpSpec(kind, dim=3)
    params = ops.init_params(spec, num_entities=5, num_relations=2, seed=4)

    def loss(tape, leaves):
        x = ad.row(leaves["entities"], 0)
        y = ad.row(leaves["relations"], 1)
        z = ad.row(leaves["entities"], 2)
        out = ops.apply_ternary(spec, leaves, x, y, z, gamma=1)
        return out if out.value.shape == () else ad.sq_l2_norm(out)

    report = ad.grad_check(loss, params, tol=1e-4, max_coords_per_param=24,
                           rng=np.random.default_rng(0))
    assert report["pass"], (kind, report)


def test_cp_fusion_gradchecks():
    spec = ops.TernaryOpSpec("tensor_fusion", dim=3, cp_rank=4)
    params = ops.init_params(spec, num_entities=5, num_relations=2, seed=6)

    def loss(tape, leaves):
        x = ad.row(leaves["entities"], 0)
        y = ad.row(leaves["relations"], 0)
        z = ad.row(leaves["entities"], 3)
        return ad.sq_l2_norm(ops.apply_ternary(spec, leaves, x, y, z, gamma=0))

    report = ad.grad_check(loss, params, tol=1e-4)
    assert report["pass"], report
