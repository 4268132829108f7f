"""Dense-tensor reverse-mode autodiff over a fixed operation set.

Values are float64 numpy arrays; scalars are shape-() arrays.  A ``Tape``
records every operation in creation order (define-by-run); ``Tape.backward``
walks the record once in reverse, which makes gradients deterministic:
the same tape always yields bit-identical gradients.

Only the operations the ternary-operator models need are provided; this is
not a general autodiff system (no broadcasting, no f32, no GPU).
"""

from __future__ import annotations

import contextlib
from collections.abc import Callable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

Array = np.ndarray

# Test hook: flips the sign of the tanh adjoint so gradient checkers can
# prove they detect a wrong derivative.  Never set outside tests/CLI.
_TANH_ADJOINT_SIGN = 1.0


@contextlib.contextmanager
def inject_tanh_adjoint_bug() -> Iterator[None]:
    """Deliberately corrupt the tanh backward rule within the block."""
    global _TANH_ADJOINT_SIGN
    _TANH_ADJOINT_SIGN = -1.0
    try:
        yield
    finally:
        _TANH_ADJOINT_SIGN = 1.0


def _as_f64(value) -> Array:
    arr = np.asarray(value, dtype=np.float64)
    return arr


class Node:
    """One recorded operation: value plus the rule for its input adjoints.

    ``vjp`` maps the output adjoint to one adjoint per input, in input
    order.  Leaves and constants have ``vjp = None``.
    """

    __slots__ = ("tape", "id", "op", "inputs", "value", "grad", "vjp")

    def __init__(self, tape: "Tape", id: int, op: str, inputs: list[int],
                 value: Array, vjp: Callable[[Array], Sequence[Array]] | None):
        self.tape = tape
        self.id = id
        self.op = op
        self.inputs = inputs
        self.value = value
        self.grad: Array | None = None  # allocated by backward
        self.vjp = vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Node(id={self.id}, op={self.op!r}, shape={self.shape})"


class Tape:
    """Ordered operation record with a set of learnable leaves."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.leaf_ids: set[int] = set()

    def _record(self, op: str, inputs: Sequence[Node], value: Array,
                vjp: Callable[[Array], Sequence[Array]] | None) -> Node:
        node = Node(self, len(self.nodes), op, [n.id for n in inputs], value, vjp)
        self.nodes.append(node)
        return node

    def leaf(self, value) -> Node:
        """Create a learnable parameter node (gradient target)."""
        node = self._record("leaf", (), _as_f64(value).copy(), None)
        self.leaf_ids.add(node.id)
        return node

    def constant(self, value) -> Node:
        """Create a non-learnable input node."""
        return self._record("const", (), _as_f64(value), None)

    def backward(self, loss: Node) -> dict[int, Array]:
        """Reverse-mode sweep from a scalar loss.

        Returns a gradient per leaf id; leaves the loss does not reach get
        zeros.  Nodes are visited exactly once, in reverse creation order.
        """
        if loss.tape is not self:
            raise ValueError("loss node does not belong to this tape")
        if loss.value.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        adjoint: list[Array | None] = [None] * len(self.nodes)
        adjoint[loss.id] = np.ones((), dtype=np.float64)
        for node in reversed(self.nodes):
            g = adjoint[node.id]
            if g is None:
                continue
            node.grad = g
            if node.vjp is None:
                continue
            for input_id, gin in zip(node.inputs, node.vjp(g)):
                acc = adjoint[input_id]
                adjoint[input_id] = gin if acc is None else acc + gin
        out: dict[int, Array] = {}
        for leaf_id in self.leaf_ids:
            g = adjoint[leaf_id]
            if g is None:
                g = np.zeros_like(self.nodes[leaf_id].value)
                self.nodes[leaf_id].grad = g
            out[leaf_id] = g
        return out


def _same_tape(*nodes: Node) -> Tape:
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ValueError("operands live on different tapes")
    return tape


def _check_same_shape(a: Node, b: Node, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "add")
    return _same_tape(a, b)._record("add", (a, b), a.value + b.value,
                                    lambda g: (g, g))


def sub(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "sub")
    return _same_tape(a, b)._record("sub", (a, b), a.value - b.value,
                                    lambda g: (g, -g))


def neg(a: Node) -> Node:
    return a.tape._record("neg", (a,), -a.value, lambda g: (-g,))


def mul_elementwise(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "mul_elementwise")
    av, bv = a.value, b.value
    return _same_tape(a, b)._record("mul", (a, b), av * bv,
                                    lambda g: (g * bv, g * av))


def scale(a: Node, c: float) -> Node:
    c = float(c)
    return a.tape._record("scale", (a,), a.value * c, lambda g: (g * c,))


def minimum(a: Node, b: Node) -> Node:
    """Coordinatewise min; ties route the adjoint to the first argument."""
    _check_same_shape(a, b, "minimum")
    take_a = a.value <= b.value
    value = np.where(take_a, a.value, b.value)
    return _same_tape(a, b)._record(
        "min", (a, b), value,
        lambda g: (np.where(take_a, g, 0.0), np.where(take_a, 0.0, g)))


# ---------------------------------------------------------------------------
# reductions and products
# ---------------------------------------------------------------------------

def dot(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "dot")
    av, bv = a.value, b.value
    return _same_tape(a, b)._record("dot", (a, b), np.asarray(np.dot(av.ravel(), bv.ravel())),
                                    lambda g: (g * bv, g * av))


def smul(s: Node, v: Node) -> Node:
    """Scalar node times vector node."""
    if s.value.shape != ():
        raise ShapeError(f"smul: first operand must be scalar, got {s.value.shape}")
    sv, vv = s.value, v.value
    return _same_tape(s, v)._record("smul", (s, v), sv * vv,
                                    lambda g: (np.asarray(np.sum(g * vv)), g * sv))


def sum_all(a: Node) -> Node:
    shape = a.value.shape
    return a.tape._record("sum", (a,), np.asarray(np.sum(a.value)),
                          lambda g: (np.broadcast_to(g, shape).copy(),))


def stack(parts: Sequence[Node]) -> Node:
    """Stack scalar nodes into a vector."""
    parts = list(parts)
    for p in parts:
        if p.value.shape != ():
            raise ShapeError(f"stack expects scalars, got shape {p.value.shape}")
    value = np.array([p.value for p in parts], dtype=np.float64)
    return _same_tape(*parts)._record(
        "stack", parts, value, lambda g: tuple(np.asarray(g[i]) for i in range(len(parts))))


def index(v: Node, i: int) -> Node:
    """Select one coordinate of a vector as a scalar."""
    if v.value.ndim != 1:
        raise ShapeError(f"index expects a vector, got shape {v.value.shape}")
    n = v.value.shape[0]

    def vjp(g):
        out = np.zeros(n, dtype=np.float64)
        out[i] = g
        return (out,)

    return v.tape._record("index", (v,), np.asarray(v.value[i]), vjp)


def row(m: Node, i: int) -> Node:
    """Select row ``i`` of a matrix; the adjoint scatters back into the table."""
    if m.value.ndim != 2:
        raise ShapeError(f"row expects a matrix, got shape {m.value.shape}")
    rows = m.value.shape[0]
    if not 0 <= i < rows:
        raise IndexError(f"row {i} out of range for table with {rows} rows")

    def vjp(g):
        out = np.zeros_like(m.value)
        out[i] = g
        return (out,)

    return m.tape._record("row", (m,), m.value[i].copy(), vjp)


# ---------------------------------------------------------------------------
# linear / multilinear contractions
# ---------------------------------------------------------------------------

def matvec(w: Node, v: Node) -> Node:
    wv, vv = w.value, v.value
    if wv.ndim != 2 or vv.ndim != 1 or wv.shape[1] != vv.shape[0]:
        raise ShapeError(f"matvec: incompatible shapes {wv.shape} @ {vv.shape}")
    return _same_tape(w, v)._record("matvec", (w, v), wv @ vv,
                                    lambda g: (np.outer(g, vv), wv.T @ g))


def contract_bilinear(w: Node, a: Node, b: Node) -> Node:
    """out[o] = sum_ij W[o,i,j] a[i] b[j].

    Implemented as reshaped matmuls rather than einsum; these contractions
    sit on the training hot path and the BLAS route is several times
    faster at small dimensions.
    """
    wv, av, bv = w.value, a.value, b.value
    if wv.ndim != 3 or av.ndim != 1 or bv.ndim != 1 \
            or wv.shape[1] != av.shape[0] or wv.shape[2] != bv.shape[0]:
        raise ShapeError(
            f"contract_bilinear: incompatible shapes {wv.shape}, {av.shape}, {bv.shape}")
    do, di, dj = wv.shape
    ab = np.outer(av, bv)
    value = wv.reshape(do, di * dj) @ ab.ravel()

    def vjp(g):
        contracted = (g @ wv.reshape(do, di * dj)).reshape(di, dj)
        return (np.multiply.outer(g, ab),
                contracted @ bv,
                av @ contracted)

    return _same_tape(w, a, b)._record("bilinear", (w, a, b), value, vjp)


def contract_trilinear(w: Node, x: Node, y: Node, z: Node) -> Node:
    """out[o] = sum_ijk W[o,i,j,k] x[i] y[j] z[k].

    Same reshaped-matmul treatment as contract_bilinear.
    """
    wv, xv, yv, zv = w.value, x.value, y.value, z.value
    if wv.ndim != 4 or xv.ndim != 1 or yv.ndim != 1 or zv.ndim != 1 \
            or wv.shape[1] != xv.shape[0] or wv.shape[2] != yv.shape[0] \
            or wv.shape[3] != zv.shape[0]:
        raise ShapeError(
            f"contract_trilinear: incompatible shapes {wv.shape}, "
            f"{xv.shape}, {yv.shape}, {zv.shape}")
    do, di, dj, dk = wv.shape
    yz = np.outer(yv, zv)
    xyz = np.multiply.outer(xv, yz)
    value = wv.reshape(do, di * dj * dk) @ xyz.ravel()

    def vjp(g):
        contracted = (g @ wv.reshape(do, -1)).reshape(di, dj, dk)
        head = xv @ contracted.reshape(di, dj * dk)
        return (np.multiply.outer(g, xyz),
                contracted.reshape(di, dj * dk) @ yz.ravel(),
                head.reshape(dj, dk) @ zv,
                yv @ head.reshape(dj, dk))

    return _same_tape(w, x, y, z)._record("trilinear", (w, x, y, z), value, vjp)


# ---------------------------------------------------------------------------
# nonlinear
# ---------------------------------------------------------------------------

def softmax3(logits: Node) -> Node:
    """Stable 3-way softmax (max subtraction); output sums to 1."""
    lv = logits.value
    if lv.shape != (3,):
        raise ShapeError(f"softmax3 expects shape (3,), got {lv.shape}")
    if not np.all(np.isfinite(lv)):
        raise NumericError("softmax3: non-finite logits")
    shifted = lv - np.max(lv)
    e = np.exp(shifted)
    p = e / np.sum(e)

    def vjp(g):
        return (p * (g - np.dot(g, p)),)

    return logits.tape._record("softmax3", (logits,), p, vjp)


def logsumexp(v: Node) -> Node:
    """log(sum(exp(v))) over a vector, max-subtracted for stability."""
    vv = v.value
    if vv.ndim != 1:
        raise ShapeError(f"logsumexp expects a vector, got shape {vv.shape}")
    m = np.max(vv)
    e = np.exp(vv - m)
    s = np.sum(e)
    value = np.asarray(m + np.log(s))
    weights = e / s
    return v.tape._record("logsumexp", (v,), value, lambda g: (g * weights,))


def sq_l2_norm(v: Node) -> Node:
    vv = v.value
    return v.tape._record("sq_l2", (v,), np.asarray(np.sum(vv * vv)),
                          lambda g: (g * 2.0 * vv,))


def l2_norm(v: Node) -> Node:
    """Euclidean norm over all elements; gradient at the origin is 0."""
    vv = v.value
    norm = float(np.sqrt(np.sum(vv * vv)))

    def vjp(g):
        if norm == 0.0:
            return (np.zeros_like(vv),)
        return (g * vv / norm,)

    return v.tape._record("l2", (v,), np.asarray(norm), vjp)


NONLINEARITIES = ("identity", "tanh", "relu")


def nonlinearity(v: Node, kind: str) -> Node:
    """Elementwise activation; relu' and tanh at the conventions below.

    relu derivative at 0 is defined as 0.
    """
    vv = v.value
    if kind == "identity":
        return v.tape._record("identity", (v,), vv.copy(), lambda g: (g,))
    if kind == "tanh":
        t = np.tanh(vv)
        return v.tape._record("tanh", (v,), t,
                              lambda g: (_TANH_ADJOINT_SIGN * g * (1.0 - t * t),))
    if kind == "relu":
        mask = vv > 0
        return v.tape._record("relu", (v,), np.where(mask, vv, 0.0),
                              lambda g: (np.where(mask, g, 0.0),))
    raise ConfigError(f"unknown nonlinearity {kind!r}; expected one of {NONLINEARITIES}")


def mean_scalars(parts: Sequence[Node]) -> Node:
    """Mean of scalar nodes (stack + sum + scale)."""
    parts = list(parts)
    if not parts:
        raise ValueError("mean_scalars needs at least one term")
    if len(parts) == 1:
        return parts[0]
    return scale(sum_all(stack(parts)), 1.0 / len(parts))


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------

def eval_loss(build_loss: Callable[[Tape, dict[str, Node]], Node],
              params: dict[str, Array]) -> float:
    """Evaluate a loss builder at the given parameters (forward only)."""
    tape = Tape()
    leaves = {name: tape.leaf(value) for name, value in params.items()}
    return float(build_loss(tape, leaves).value)


def eval_loss_and_grads(build_loss: Callable[[Tape, dict[str, Node]], Node],
                        params: dict[str, Array]) -> tuple[float, dict[str, Array]]:
    """Evaluate a loss builder and return analytic parameter gradients."""
    tape = Tape()
    leaves = {name: tape.leaf(value) for name, value in params.items()}
    loss = build_loss(tape, leaves)
    grad_by_id = tape.backward(loss)
    grads = {name: grad_by_id[leaf.id] for name, leaf in leaves.items()}
    return float(loss.value), grads


def grad_check(build_loss: Callable[[Tape, dict[str, Node]], Node],
               params: dict[str, Array],
               step: float = 1e-5,
               tol: float = 1e-4,
               max_coords_per_param: int | None = None,
               rng: np.random.Generator | None = None) -> dict:
    """Compare analytic gradients against central finite differences.

    Per-coordinate relative error is |a - n| / max(|a|, |n|, 1e-8).  When
    ``max_coords_per_param`` is set, that many coordinates are subsampled
    per parameter (seeded via ``rng``) to keep large tensors affordable;
    the default checks every coordinate.

    Returns {"max_rel_error", "pass", "per_param"}.
    """
    _, analytic = eval_loss_and_grads(build_loss, params)
    if rng is None:
        rng = np.random.default_rng(0)
    max_rel = 0.0
    per_param: dict[str, float] = {}
    for name in sorted(params):
        base = params[name]
        flat = base.reshape(-1)
        n_coords = flat.size
        if max_coords_per_param is not None and n_coords > max_coords_per_param:
            coords = np.sort(rng.choice(n_coords, size=max_coords_per_param, replace=False))
        else:
            coords = np.arange(n_coords)
        grad_flat = analytic[name].reshape(-1)
        worst = 0.0
        work = {k: (v.copy() if k == name else v) for k, v in params.items()}
        wflat = work[name].reshape(-1)
        for c in coords:
            orig = wflat[c]
            wflat[c] = orig + step
            f_plus = eval_loss(build_loss, work)
            wflat[c] = orig - step
            f_minus = eval_loss(build_loss, work)
            wflat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = grad_flat[c]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        per_param[name] = worst
        max_rel = max(max_rel, worst)
    return {"max_rel_error": max_rel, "pass": max_rel < tol, "per_param": per_param}
