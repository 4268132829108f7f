"""Measure how far an operator is from the two algebraic laws.

assoc_residual checks the nesting law, dist_residual checks per-slot
distributivity over the operator's ambient addition.  The oracles sit at
zero by construction; learnable operators land wherever their weights
put them, and the Monte-Carlo means of these residuals are exactly what
the training loop penalizes.
"""

import numpy as np

import triadic.autodiff as ad
from triadic.operators import TernaryOpSpec, apply_ternary, init_params
from triadic.regularizers import (ResidualSampleConfig, assoc_residual,
                                  dist_residual, regularizer_loss)

rng = np.random.default_rng(3)


def residuals_on_random_args(spec, params, n=200):
    """Worst-case residuals over n random argument tuples."""
    worst_assoc, worst_dist = 0.0, 0.0
    for _ in range(n):
        tape = ad.Tape()
        leaves = {name: tape.leaf(v) for name, v in params.items()}
        args = [tape.leaf(rng.normal(size=spec.dim)) for _ in range(5)]
        a = assoc_residual(spec, leaves, *args, gamma=0, delta=1)
        d = dist_residual(spec, leaves, 1, *args[:4], gamma=0)
        worst_assoc = max(worst_assoc, float(a.value))
        worst_dist = max(worst_dist, float(d.value))
    return worst_assoc, worst_dist


for kind in ("oracle_hadamard", "oracle_tropical", "tensor_fusion"):
    spec = TernaryOpSpec(kind=kind, dim=6)
    params = init_params(spec, num_entities=4, num_relations=2, seed=1)
    wa, wd = residuals_on_random_args(spec, params)
    print(f"{kind:16s} worst assoc residual {wa:.3e}   worst dist residual {wd:.3e}")

# The same quantities as differentiable loss nodes, the way the trainer
# sees them: one tape, Monte-Carlo means, gradients flowing back into
# every parameter that shaped the residual.
spec = TernaryOpSpec(kind="tensor_fusion", dim=6)
params = init_params(spec, num_entities=4, num_relations=2, seed=1)
batch = np.array([[0, 0, 1], [3, 1, 2]])  # (head, relation, tail) rows

tape = ad.Tape()
leaves = {name: tape.leaf(v) for name, v in params.items()}
losses = regularizer_loss(spec, leaves, batch, num_relations=2,
                          cfg=ResidualSampleConfig(num_samples=16, seed=0))
print("\nMonte-Carlo L_assoc:", float(losses["L_assoc"].value))
print("Monte-Carlo L_dist: ", float(losses["L_dist"].value))

grads = tape.backward(losses["L_assoc"])
g_w1 = grads[leaves["W1"].id]
print("gradient norm into W1 from L_assoc:", float(np.linalg.norm(g_w1)))
