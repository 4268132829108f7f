"""Ternary operators [x, y, z]_g behind one interface.

Six kinds share the signature (params, x, y, z, relation id) -> output:

* ``tensor_fusion``: sigma(W1(x (x) y (x) z) + W2(x (x) g_r) + W3 z + b_r),
  the full learnable parameterization.  W1 is stored dense by default;
  ``cp_rank`` switches to a sum-of-R-outer-products factorization.
* ``attention_aggregation``: a softmax-weighted convex combination of the
  three arguments, with logits <u_r, x>, <u_r, y>, <u_r, z>.
* ``oracle_hadamard``: x o y o z o g_r (coordinatewise product).  Exactly
  distributive in every argument and exactly nest-associative, so it
  witnesses that the axiom residuals can reach zero.
* ``oracle_tropical``: x + y + z + g_r, whose ambient "addition" for the
  distributivity law is coordinatewise min (adding a constant distributes
  over min exactly).  A second, structurally different exact witness.
* ``baseline_cascaded_binary``: x (x) (y (x) z) through one shared bilinear
  map; ternary interaction only via composition of binary ones.
* ``baseline_trilinear_diag``: scalar sum_i x_i y_i z_i, relation-blind.

Parameters live in a flat name -> array dict so the optimizer, gradient
checker, and checkpoint code can treat every model identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Array, Node, Tape
from .errors import ConfigError

KINDS = (
    "tensor_fusion",
    "attention_aggregation",
    "oracle_hadamard",
    "oracle_tropical",
    "baseline_cascaded_binary",
    "baseline_trilinear_diag",
)

# Operators whose output is a scalar score rather than a d-vector.  They
# cannot be nested, so the associativity residual is undefined for them.
SCALAR_OUTPUT_KINDS = frozenset({"baseline_trilinear_diag"})

# Baselines carry no algebraic regularization pressure during training.
BASELINE_KINDS = frozenset({"baseline_cascaded_binary", "baseline_trilinear_diag"})


@dataclass(frozen=True)
class TernaryOpSpec:
    """Which operator family to build, and at what size."""

    kind: str
    dim: int
    nonlinearity: str = "tanh"
    cp_rank: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.nonlinearity not in ad.NONLINEARITIES:
            raise ConfigError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.cp_rank is not None:
            if self.kind != "tensor_fusion":
                raise ConfigError("cp_rank only applies to tensor_fusion")
            if self.cp_rank < 1:
                raise ConfigError(f"cp_rank must be >= 1, got {self.cp_rank}")

    @property
    def scalar_output(self) -> bool:
        return self.kind in SCALAR_OUTPUT_KINDS

    @property
    def supports_nesting(self) -> bool:
        return not self.scalar_output

    @property
    def monoid(self) -> str:
        """Ambient addition for the distributivity law: "sum" or "min"."""
        return "min" if self.kind == "oracle_tropical" else "sum"


def param_shapes(spec: TernaryOpSpec, num_entities: int,
                 num_relations: int) -> dict[str, tuple[int, ...]]:
    """Shapes of every learnable tensor the given operator kind uses."""
    d = spec.dim
    shapes: dict[str, tuple[int, ...]] = {
        "entities": (num_entities, d),
        "relations": (num_relations, d),
    }
    if spec.kind == "tensor_fusion":
        if spec.cp_rank is None:
            shapes["W1"] = (d, d, d, d)
        else:
            r = spec.cp_rank
            shapes["W1_fx"] = (r, d)
            shapes["W1_fy"] = (r, d)
            shapes["W1_fz"] = (r, d)
            shapes["W1_out"] = (d, r)
        shapes["W2"] = (d, d, d)
        shapes["W3"] = (d, d)
        shapes["g"] = (num_relations, d)
        shapes["b"] = (num_relations, d)
    elif spec.kind == "attention_aggregation":
        shapes["u"] = (num_relations, d)
    elif spec.kind in ("oracle_hadamard", "oracle_tropical"):
        shapes["g"] = (num_relations, d)
    elif spec.kind == "baseline_cascaded_binary":
        shapes["B"] = (d, d, d)
    # baseline_trilinear_diag needs embeddings only
    return shapes


def _uniform_fan(rng: np.random.Generator, shape: tuple[int, ...]) -> Array:
    """U[-a, a] with a = sqrt(6 / (fan_in + fan_out)) for a contraction
    whose output extent is shape[0] and input extent is the rest."""
    fan_out = shape[0]
    fan_in = int(np.prod(shape[1:]))
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_params(spec: TernaryOpSpec, num_entities: int, num_relations: int,
                seed: int) -> dict[str, Array]:
    """Seeded initialization.

    Contraction weights are U[-a, a] with the fan-based half-width above;
    embedding-like tables (entities, relations, g, u) are N(0, 1/sqrt(d));
    biases start at zero.  Nothing starts all-zero except the bias, which
    keeps the model away from the degenerate everything-zero stationary
    point.
    """
    rng = np.random.default_rng(seed)
    d = spec.dim
    params: dict[str, Array] = {}
    for name, shape in param_shapes(spec, num_entities, num_relations).items():
        if name in ("entities", "relations", "g", "u"):
            params[name] = rng.normal(0.0, d ** -0.5, size=shape)
        elif name == "b":
            params[name] = np.zeros(shape)
        else:
            params[name] = _uniform_fan(rng, shape)
    return params


def _cp_trilinear(leaves: dict[str, Node], x: Node, y: Node, z: Node) -> Node:
    """Factored W1: out = W1_out @ ((W1_fx x) o (W1_fy y) o (W1_fz z))."""
    px = ad.matvec(leaves["W1_fx"], x)
    py = ad.matvec(leaves["W1_fy"], y)
    pz = ad.matvec(leaves["W1_fz"], z)
    return ad.matvec(leaves["W1_out"], ad.mul_elementwise(ad.mul_elementwise(px, py), pz))


def materialize_cp(params: dict[str, Array]) -> Array:
    """Densify CP factors into the equivalent rank-4 tensor (for tests)."""
    return np.einsum("or,ri,rj,rk->oijk", params["W1_out"],
                     params["W1_fx"], params["W1_fy"], params["W1_fz"])


def apply_ternary(spec: TernaryOpSpec, leaves: dict[str, Node],
                  x: Node, y: Node, z: Node, gamma: int) -> Node:
    """Evaluate [x, y, z]_gamma on the tape the arguments live on.

    ``leaves`` maps parameter names to tape nodes (see ``param_shapes``).
    Raises IndexError for a relation id outside the context tables.
    """
    kind = spec.kind
    if kind == "tensor_fusion":
        if spec.cp_rank is None:
            t1 = ad.contract_trilinear(leaves["W1"], x, y, z)
        else:
            t1 = _cp_trilinear(leaves, x, y, z)
        t2 = ad.contract_bilinear(leaves["W2"], x, ad.row(leaves["g"], gamma))
        t3 = ad.matvec(leaves["W3"], z)
        pre = ad.add(ad.add(ad.add(t1, t2), t3), ad.row(leaves["b"], gamma))
        return ad.nonlinearity(pre, spec.nonlinearity)
    if kind == "attention_aggregation":
        u = ad.row(leaves["u"], gamma)
        alpha = ad.softmax3(ad.stack([ad.dot(u, x), ad.dot(u, y), ad.dot(u, z)]))
        return ad.add(ad.add(ad.smul(ad.index(alpha, 0), x),
                             ad.smul(ad.index(alpha, 1), y)),
                      ad.smul(ad.index(alpha, 2), z))
    if kind == "oracle_hadamard":
        prod = ad.mul_elementwise(ad.mul_elementwise(x, y), z)
        return ad.mul_elementwise(prod, ad.row(leaves["g"], gamma))
    if kind == "oracle_tropical":
        return ad.add(ad.add(ad.add(x, y), z), ad.row(leaves["g"], gamma))
    if kind == "baseline_cascaded_binary":
        inner = ad.contract_bilinear(leaves["B"], y, z)
        return ad.contract_bilinear(leaves["B"], x, inner)
    if kind == "baseline_trilinear_diag":
        return ad.sum_all(ad.mul_elementwise(ad.mul_elementwise(x, y), z))
    raise ConfigError(f"unknown operator kind {kind!r}")  # unreachable by construction


def monoid_add(spec: TernaryOpSpec, a: Node, b: Node) -> Node:
    """The ambient addition the distributivity law quantifies over."""
    if spec.monoid == "min":
        return ad.minimum(a, b)
    return ad.add(a, b)
