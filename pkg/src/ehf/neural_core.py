"""Minimal reverse-mode differentiation kernel for hedging episodes.

A Tape records the forward pass of one mini-batch episode (30 daily policy
evaluations feeding a scalar risk objective) and replays it backwards for
exact parameter gradients, including backpropagation through time via the
carried delta and recurrent states. It is deliberately not a general autodiff
framework: only the primitives the shipped policies need are implemented,
all in float64.

Also here: plain (non-recording) dense and GRU forward passes, fan-based
initialization, Adam, finite-difference gradient checking, and the versioned
model checkpoint format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IntegrityError, NumericError, ShapeError, StateError

MODEL_MAGIC = b"EHFM"
MODEL_VERSION = 1


# ---------------------------------------------------------------------------
# plain forward passes
# ---------------------------------------------------------------------------

def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    # branch on sign for overflow safety at large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return _sigmoid(x)


_ACTIVATIONS = {
    "relu": _relu,
    "tanh": np.tanh,
    "sigmoid": sigmoid,
    "identity": lambda x: x,
}


@dataclass
class DenseLayer:
    """Affine map plus pointwise activation; weights [out, in], bias [out]."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"inconsistent layer shapes {self.weights.shape} / {self.bias.shape}")


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """activation(W x + b); accepts a single vector or a [batch, in] matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.weights.shape[1]:
        raise ShapeError(
            f"input width {x.shape[-1]} != layer fan-in {layer.weights.shape[1]}")
    return _ACTIVATIONS[layer.activation](x @ layer.weights.T + layer.bias)


@dataclass
class GRUCell:
    """Standard GRU gates; each weight matrix is [hidden, input + hidden]."""

    w_update: np.ndarray
    w_reset: np.ndarray
    w_cand: np.ndarray
    b_update: np.ndarray
    b_reset: np.ndarray
    b_cand: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w_update.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_update.shape[1] - self.w_update.shape[0]


def gru_forward(cell: GRUCell, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """One GRU step: h' = (1 - z) * h + z * tanh(W_h [x; r * h] + b_h)."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if x.shape[-1] != cell.input_size or h.shape[-1] != cell.hidden_size:
        raise ShapeError(
            f"gru input {x.shape[-1]}/state {h.shape[-1]} do not match "
            f"cell {cell.input_size}/{cell.hidden_size}")
    xh = np.concatenate([x, h], axis=-1)
    z = sigmoid(xh @ cell.w_update.T + cell.b_update)
    r = sigmoid(xh @ cell.w_reset.T + cell.b_reset)
    xrh = np.concatenate([x, r * h], axis=-1)
    h_cand = np.tanh(xrh @ cell.w_cand.T + cell.b_cand)
    return (1.0 - z) * h + z * h_cand


# ---------------------------------------------------------------------------
# recording tape
# ---------------------------------------------------------------------------

class Node:
    """One recorded value; vjp maps the upstream gradient to parent gradients."""

    __slots__ = ("value", "parents", "vjp", "requires")

    def __init__(self, value, parents=(), vjp=None, requires=False):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.requires = requires


class Tape:
    """Append-only record of a forward pass; nodes are stored in evaluation order."""

    def __init__(self):
        self._nodes: list[Node] = []
        self._params: dict[str, Node] = {}

    # -- leaves ----------------------------------------------------------
    def param(self, name: str, value: np.ndarray) -> Node:
        if name in self._params:
            return self._params[name]
        node = Node(value, requires=True)
        self._params[name] = node
        return node

    def const(self, value) -> Node:
        return Node(np.asarray(value, dtype=np.float64))

    def _record(self, value, parents, vjp) -> Node:
        requires = any(p.requires for p in parents)
        node = Node(value, tuple(parents), vjp if requires else None, requires)
        if requires:
            self._nodes.append(node)
        return node

    # -- primitives ------------------------------------------------------
    def matmul(self, x: Node, w: Node) -> Node:
        xv, wv = x.value, w.value
        if xv.shape[-1] != wv.shape[1]:
            raise ShapeError(f"matmul width {xv.shape[-1]} != fan-in {wv.shape[1]}")
        value = xv @ wv.T

        def vjp(g):
            return g @ wv, g.T @ xv

        return self._record(value, (x, w), vjp)

    def add_row(self, x: Node, b: Node) -> Node:
        value = x.value + b.value

        def vjp(g):
            return g, g.sum(axis=0) if g.ndim > b.value.ndim else g

        return self._record(value, (x, b), vjp)

    def add(self, a: Node, b: Node) -> Node:
        return self._record(a.value + b.value, (a, b), lambda g: (g, g))

    def sub(self, a: Node, b: Node) -> Node:
        return self._record(a.value - b.value, (a, b), lambda g: (g, -g))

    def mul(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        return self._record(av * bv, (a, b), lambda g: (g * bv, g * av))

    def mul_const(self, a: Node, c) -> Node:
        return self._record(a.value * c, (a,), lambda g: (g * c,))

    def add_const(self, a: Node, c) -> Node:
        return self._record(a.value + c, (a,), lambda g: (g,))

    def rsub_const(self, c, a: Node) -> Node:
        """c - a for constant c."""
        return self._record(c - a.value, (a,), lambda g: (-g,))

    def abs(self, a: Node) -> Node:
        # subgradient convention sign(0) = 0
        sgn = np.sign(a.value)
        return self._record(np.abs(a.value), (a,), lambda g: (g * sgn,))

    def relu(self, a: Node) -> Node:
        value = np.maximum(a.value, 0.0)
        mask = a.value > 0
        return self._record(value, (a,), lambda g: (g * mask,))

    def sigmoid(self, a: Node) -> Node:
        value = _sigmoid(np.asarray(a.value, dtype=np.float64))
        return self._record(value, (a,), lambda g: (g * value * (1.0 - value),))

    def tanh(self, a: Node) -> Node:
        value = np.tanh(a.value)
        return self._record(value, (a,), lambda g: (g * (1.0 - value * value),))

    def exp(self, a: Node) -> Node:
        value = np.exp(a.value)
        return self._record(value, (a,), lambda g: (g * value,))

    def log(self, a: Node) -> Node:
        av = a.value
        return self._record(np.log(av), (a,), lambda g: (g / av,))

    def hstack(self, parts: list[Node]) -> Node:
        """Column-concatenate [batch]- or [batch, k]-shaped nodes into [batch, sum k]."""
        cols = [p.value if p.value.ndim == 2 else p.value[:, None] for p in parts]
        widths = [c.shape[1] for c in cols]
        value = np.concatenate(cols, axis=1)
        offsets = np.cumsum([0] + widths)

        def vjp(g):
            grads = []
            for i, p in enumerate(parts):
                piece = g[:, offsets[i]:offsets[i + 1]]
                grads.append(piece if p.value.ndim == 2 else piece[:, 0])
            return tuple(grads)

        return self._record(value, tuple(parts), vjp)

    def squeeze_col(self, a: Node) -> Node:
        if a.value.ndim != 2 or a.value.shape[1] != 1:
            raise ShapeError(f"expected [batch, 1], got {a.value.shape}")
        return self._record(a.value[:, 0], (a,), lambda g: (g[:, None],))

    def where(self, mask: np.ndarray, a: Node, b: Node) -> Node:
        value = np.where(mask, a.value, b.value)
        return self._record(value, (a, b), lambda g: (g * mask, g * ~mask))

    def mean(self, a: Node) -> Node:
        n = a.value.size
        value = float(np.mean(a.value))
        return self._record(value, (a,), lambda g: (np.full_like(a.value, g / n),))

    def sum(self, a: Node) -> Node:
        value = float(np.sum(a.value))
        return self._record(value, (a,), lambda g: (np.full_like(a.value, g),))

    # -- reverse pass ------------------------------------------------------
    def backward(self, root: Node) -> dict[str, np.ndarray]:
        """Accumulate d(root)/d(param) for every parameter touched by the recording."""
        if not self._nodes:
            raise StateError("backward called before any forward pass was recorded")
        if root is not self._nodes[-1] and root not in self._params.values():
            # roots must come from this tape; scanning is O(n) but only on error paths
            if all(root is not n for n in self._nodes):
                raise StateError("backward root was not recorded on this tape")
        grads: dict[int, np.ndarray | float] = {id(root): np.float64(1.0)}
        for node in reversed(self._nodes):
            g = grads.pop(id(node), None)
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if not parent.requires:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        out = {}
        for name, node in self._params.items():
            g = grads.get(id(node))
            out[name] = np.zeros_like(node.value) if g is None else np.asarray(g)
        return out


def tape_dense(tape: Tape, x: Node, w: Node, b: Node, activation: str) -> Node:
    pre = tape.add_row(tape.matmul(x, w), b)
    if activation == "identity":
        return pre
    return getattr(tape, activation)(pre)


def tape_gru(tape: Tape, x: Node, h: Node, w_z: Node, b_z: Node,
             w_r: Node, b_r: Node, w_h: Node, b_h: Node) -> Node:
    xh = tape.hstack([x, h])
    z = tape.sigmoid(tape.add_row(tape.matmul(xh, w_z), b_z))
    r = tape.sigmoid(tape.add_row(tape.matmul(xh, w_r), b_r))
    xrh = tape.hstack([x, tape.mul(r, h)])
    h_cand = tape.tanh(tape.add_row(tape.matmul(xrh, w_h), b_h))
    return tape.add(tape.mul(tape.rsub_const(1.0, z), h), tape.mul(z, h_cand))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def fan_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, (n_out, n_in))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                   m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """In-place Adam update with bias correction; increments the step count."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    per_block: dict[str, float]

    @property
    def max_rel_error(self) -> float:
        return max(self.per_block.values()) if self.per_block else 0.0

    def ok(self, tol: float) -> bool:
        return self.max_rel_error <= tol


def grad_check(loss_and_grad, params: dict[str, np.ndarray],
               h: float = 1e-6, floor: float = 1e-3) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    loss_and_grad(params) must return (scalar loss, gradient dict) and be a
    pure function of the parameters. The relative-error denominator is floored
    so roundoff noise on near-zero partials does not read as failure.

    Check at a generic point: relu and abs use a zero subgradient at exactly
    zero, so parameters that put a pre-activation precisely on a kink (e.g.
    zero-initialised biases fed an all-zero feature row) make central
    differences disagree with the analytic convention. Perturb the parameters
    first when that can happen.
    """
    _, analytic = loss_and_grad(params)
    report = {}
    work = {k: p.copy() for k, p in params.items()}
    for name, p in work.items():
        worst = 0.0
        flat = p.reshape(-1)
        a_flat = np.asarray(analytic[name]).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _ = loss_and_grad(work)
            flat[i] = orig - h
            down, _ = loss_and_grad(work)
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(a_flat[i]), abs(numeric), floor)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
        report[name] = worst
    return GradCheckReport(report)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_params(filename, arch: str, params: dict[str, np.ndarray],
                meta: dict | None = None) -> None:
    """Versioned binary checkpoint: magic, architecture tag, meta JSON, f64 arrays.

    Round-trips are bit-exact; array order is sorted by name so rewrites of the
    same model are byte-identical.
    """
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode()
    arch_blob = arch.encode()
    with open(filename, "wb") as fh:
        fh.write(struct.pack("<4sI", MODEL_MAGIC, MODEL_VERSION))
        fh.write(struct.pack("<H", len(arch_blob)))
        fh.write(arch_blob)
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            blob = name.encode()
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            fh.write(struct.pack("<H", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_params(filename) -> tuple[str, dict[str, np.ndarray], dict]:
    with open(filename, "rb") as fh:
        raw = fh.read()
    try:
        magic, version = struct.unpack_from("<4sI", raw, 0)
        if magic != MODEL_MAGIC:
            raise IntegrityError(f"{filename}: bad magic {magic!r}")
        if version != MODEL_VERSION:
            raise IntegrityError(f"{filename}: unsupported version {version}")
        offset = 8
        (arch_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        arch = raw[offset:offset + arch_len].decode()
        offset += arch_len
        (meta_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        meta = json.loads(raw[offset:offset + meta_len].decode())
        offset += meta_len
        (count,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            name = raw[offset:offset + name_len].decode()
            offset += name_len
            (ndim,) = struct.unpack_from("<B", raw, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}Q", raw, offset)
            offset += 8 * ndim
            n_vals = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(raw, dtype="<f8", count=n_vals, offset=offset).reshape(shape)
            offset += 8 * n_vals
            params[name] = arr.copy()
    except (struct.error, ValueError) as exc:
        # struct.error: header cut short; ValueError: frombuffer past the end
        # or mangled meta JSON (JSONDecodeError subclasses ValueError)
        raise IntegrityError(f"{filename}: truncated checkpoint ({exc})") from exc
    return arch, params, meta


def require_finite(value, context: str) -> None:
    """Raise NumericError when a loss or gradient goes NaN/inf."""
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite value encountered in {context}")
