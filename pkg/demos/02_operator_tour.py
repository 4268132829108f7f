"""Evaluate every ternary operator kind on the same inputs, side by side.

All six kinds share one calling convention: a parameter dict, three
argument vectors, and a relation id.  The oracles need no training to be
interesting; the learnable kinds start from seeded random weights.
"""

import numpy as np

import triadic.autodiff as ad
from triadic.operators import KINDS, TernaryOpSpec, apply_ternary, init_params

D = 4
rng = np.random.default_rng(7)
x, y, z = rng.normal(size=(3, D))

for kind in KINDS:
    spec = TernaryOpSpec(kind=kind, dim=D)
    params = init_params(spec, num_entities=5, num_relations=2, seed=0)

    tape = ad.Tape()
    leaves = {name: tape.leaf(v) for name, v in params.items()}
    out = apply_ternary(spec, leaves,
                        tape.leaf(x), tape.leaf(y), tape.leaf(z), gamma=0)
    with np.printoptions(precision=3, suppress=True):
        print(f"{kind:25s} -> {out.value}")

# The hadamard oracle is [x, y, z]_g = x o y o z o g_r: coordinatewise
# products distribute over + in every slot and nest associatively, so it
# satisfies the ternary semiring axioms exactly.  Verify one instance of
# the nesting law [x, y, [u, v, w]_g]_d = [[x, y, u]_g, v, w]_d by hand.
spec = TernaryOpSpec(kind="oracle_hadamard", dim=D)
params = init_params(spec, 5, 2, seed=0)
u, v, w = rng.normal(size=(3, D))

def bracket(a, b, c, gamma):
    tape = ad.Tape()
    leaves = {name: tape.leaf(val) for name, val in params.items()}
    return apply_ternary(spec, leaves,
                         tape.leaf(a), tape.leaf(b), tape.leaf(c), gamma).value

lhs = bracket(x, y, bracket(u, v, w, 0), 1)
rhs = bracket(bracket(x, y, u, 0), v, w, 1)
print("\nhadamard nesting gap:", float(np.abs(lhs - rhs).max()))

# tensor_fusion with a squashing nonlinearity breaks the same law; the
# gap is what the associativity regularizer later penalizes.
spec = TernaryOpSpec(kind="tensor_fusion", dim=D, nonlinearity="tanh")
params = init_params(spec, 5, 2, seed=0)
lhs = bracket(x, y, bracket(u, v, w, 0), 1)
rhs = bracket(bracket(x, y, u, 0), v, w, 1)
print("tensor_fusion (tanh) nesting gap:", float(np.abs(lhs - rhs).max()))
