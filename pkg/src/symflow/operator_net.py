"""Spectral neural operator on regular grids with tape reverse-mode autodiff.

The architecture is the familiar Fourier-operator stack: a pointwise lift,
`depth` blocks of (spectral convolution over retained low modes + pointwise
linear skip + smooth nonlinearity), and a two-layer pointwise projection.
Because the spectral weights act on a fixed set of Fourier modes, the same
parameters evaluate at any grid resolution satisfying n >= 2*modes per axis.

Autodiff is a recorded tape over numpy arrays.  Complex nodes use the
gradient convention g = dL/dRe + i*dL/dIm, which makes a complex parameter
viewed as float64 pairs behave exactly like two real parameters (Adam and
finite-difference checks treat them that way).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "Tape",
    "NetConfig",
    "OperatorNet",
    "adam_init",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
    "constant",
    "add",
    "sub",
    "mul",
    "gelu",
    "sum_axes",
    "mean_all",
    "sqrt_",
    "take",
    "apply_compiled",
]

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """Tape node: a value, an optional gradient, and a reverse closure."""

    __slots__ = ("value", "grad", "tape", "_vjp")

    def __init__(self, value, tape: Optional["Tape"] = None, vjp=None):
        self.value = np.asarray(value)
        self.grad = None
        self.tape = tape
        self._vjp = vjp if tape is not None else None
        if tape is not None:
            tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)


class Tape:
    """Execution-ordered op record; reverse sweep visits each node once."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.leaves: dict[str, Tensor] = {}

    def leaf(self, name: str, value: np.ndarray) -> Tensor:
        t = self.leaves.get(name)
        if t is None:
            t = Tensor(value, self)
            self.leaves[name] = t
        elif t.value is not value:
            raise ValueError(f"leaf {name!r} rebound to a different array")
        return t

    def backward(self, loss: Tensor) -> None:
        if not self.nodes:
            raise RuntimeError("backward without a recorded forward")
        if loss.tape is not self:
            raise RuntimeError("backward called on a tensor from another tape")
        if loss.value.shape != ():
            raise ValueError("backward needs a scalar loss")
        for n in self.nodes:
            n.grad = None
        loss.grad = np.ones(())
        for node in reversed(self.nodes):
            if node.grad is None or node._vjp is None:
                continue
            node._vjp(node.grad)

    def gradients(self) -> dict[str, np.ndarray]:
        out = {}
        for name, t in self.leaves.items():
            out[name] = t.grad if t.grad is not None else np.zeros_like(t.value)
        return out

    def release(self) -> None:
        """Drop recorded activations and closures once grads are consumed.

        Tensors, their vjp closures and the node list form reference cycles;
        a long training loop would otherwise stack whole graphs until the
        cycle collector catches up.  The tape is unusable afterwards.
        """
        for n in self.nodes:
            n.grad = None
            n._vjp = None
        self.nodes.clear()
        self.leaves.clear()


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(x) -> Tensor:
    return Tensor(np.asarray(x))


def _result_tape(parents: Sequence[Tensor]) -> Optional[Tape]:
    tape = None
    for p in parents:
        if p.tape is not None:
            if tape is None:
                tape = p.tape
            elif tape is not p.tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _accum(p: Tensor, g: np.ndarray) -> None:
    if p.tape is None:
        return
    if not np.iscomplexobj(p.value) and np.iscomplexobj(g):
        g = g.real
    p.grad = g if p.grad is None else p.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gs, s) in enumerate(zip(g.shape, shape)):
        if s == 1 and gs != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    tape = _result_tape((a, b))

    def vjp(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(g, b.value.shape))

    return Tensor(a.value + b.value, tape, vjp)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    tape = _result_tape((a, b))

    def vjp(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(-g, b.value.shape))

    return Tensor(a.value - b.value, tape, vjp)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    tape = _result_tape((a, b))

    def vjp(g):
        _accum(a, _unbroadcast(g * np.conj(b.value), a.value.shape))
        _accum(b, _unbroadcast(g * np.conj(a.value), b.value.shape))

    return Tensor(a.value * b.value, tape, vjp)


def gelu(x: Tensor) -> Tensor:
    v = x.value
    cdf = 0.5 * (1.0 + erf(v / _SQRT2))

    def vjp(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * v * v)
        _accum(x, g * (cdf + v * pdf))

    return Tensor(v * cdf, x.tape, vjp)


def sum_axes(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    shape = x.value.shape

    def vjp(g):
        _accum(x, np.broadcast_to(np.expand_dims(g, axes), shape).copy())

    return Tensor(np.sum(x.value, axis=axes), x.tape, vjp)


def mean_all(x: Tensor) -> Tensor:
    size = x.value.size

    def vjp(g):
        _accum(x, np.full(x.value.shape, float(g) / size))

    return Tensor(np.mean(x.value), x.tape, vjp)


def sqrt_(x: Tensor) -> Tensor:
    r = np.sqrt(x.value)

    def vjp(g):
        _accum(x, g / (2.0 * r))

    return Tensor(r, x.tape, vjp)


def _to_complex(x: Tensor) -> Tensor:
    def vjp(g):
        _accum(x, g)  # real parent keeps only the real part

    return Tensor(x.value.astype(np.complex128), x.tape, vjp)


def _take_real(z: Tensor) -> Tensor:
    def vjp(g):
        _accum(z, g + 0j)

    return Tensor(z.value.real.copy(), z.tape, vjp)


def _fft2(z: Tensor) -> Tensor:
    n1, n2 = z.value.shape[-2], z.value.shape[-1]

    def vjp(g):
        _accum(z, (n1 * n2) * np.fft.ifft2(g, axes=(-2, -1)))

    return Tensor(np.fft.fft2(z.value, axes=(-2, -1)), z.tape, vjp)


def _ifft2(z: Tensor) -> Tensor:
    n1, n2 = z.value.shape[-2], z.value.shape[-1]

    def vjp(g):
        _accum(z, np.fft.fft2(g, axes=(-2, -1)) / (n1 * n2))

    return Tensor(np.fft.ifft2(z.value, axes=(-2, -1)), z.tape, vjp)


def _block_get(x: Tensor, idx) -> Tensor:
    def vjp(g):
        buf = np.zeros(x.value.shape, dtype=x.value.dtype)
        buf[idx] = g
        _accum(x, buf)

    return Tensor(x.value[idx], x.tape, vjp)


def take(x: Tensor, idx) -> Tensor:
    """Basic slice of a tensor; the adjoint scatters into zeros."""
    return _block_get(x, idx)


def _assemble(shape, dtype, pieces) -> Tensor:
    """Zeros of the given shape with disjoint blocks filled from tensors."""
    out = np.zeros(shape, dtype=dtype)
    for idx, t in pieces:
        out[idx] = t.value
    tape = _result_tape([t for _, t in pieces])

    def vjp(g):
        for idx, t in pieces:
            _accum(t, g[idx])

    return Tensor(out, tape, vjp)


def _channel_mix(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    # (b, i, n1, n2) x (i, o) -> (b, o, n1, n2) through BLAS, not c_einsum
    out = np.tensordot(a, w, axes=([1], [0]))
    return np.ascontiguousarray(np.moveaxis(out, 3, 1))


def _pointwise_linear(x: Tensor, w: Tensor) -> Tensor:
    # channels mix pointwise: (b, i, n1, n2) x (i, o) -> (b, o, n1, n2)
    tape = _result_tape((x, w))

    def vjp(g):
        _accum(x, _channel_mix(g, w.value.T))
        _accum(w, np.tensordot(x.value, g, axes=([0, 2, 3], [0, 2, 3])))

    return Tensor(_channel_mix(x.value, w.value), tape, vjp)


def _spectral_mul(x: Tensor, w: Tensor) -> Tensor:
    # per-mode channel mixing: (b, i, m1, m2) x (i, o, m1, m2) -> (b, o, m1, m2)
    tape = _result_tape((x, w))

    def vjp(g):
        _accum(x, np.einsum("boxy,ioxy->bixy", g, np.conj(w.value)))
        _accum(w, np.einsum("bixy,boxy->ioxy", np.conj(x.value), g))

    return Tensor(np.einsum("bixy,ioxy->boxy", x.value, w.value), tape, vjp)


def apply_compiled(ce, const_inputs: Mapping[str, np.ndarray], u: Tensor,
                   wrt: str) -> Tensor:
    """Bridge a compiled symbolic expression into the tape.

    const_inputs are batched arrays for the non-trained slots; u is the
    network output tensor bound to slot `wrt`.  The reverse pass goes through
    the expression's exact discrete adjoint.
    """
    inputs = dict(const_inputs)
    inputs[wrt] = u.value
    out = ce.eval(inputs, batch=True)

    def vjp(g):
        _accum(u, ce.adjoint_grad(inputs, g, wrt, batch=True))

    return Tensor(out, u.tape, vjp)


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetConfig:
    in_channels: int
    modes: tuple[int, int] = (12, 12)
    width: int = 24
    depth: int = 4
    proj_width: int = 32
    out_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if min(self.in_channels, self.width, self.depth, self.proj_width,
               self.out_channels, *self.modes) < 1:
            raise ValueError("all network dimensions must be >= 1")

    def to_json(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "modes": list(self.modes),
            "width": self.width,
            "depth": self.depth,
            "proj_width": self.proj_width,
            "out_channels": self.out_channels,
        }

    @staticmethod
    def from_json(d: Mapping) -> "NetConfig":
        d = dict(d)
        d["modes"] = tuple(d["modes"])
        return NetConfig(**d)


class OperatorNet:
    """Parameter container plus the forward graph builder."""

    def __init__(self, config: NetConfig, params: dict[str, np.ndarray],
                 seed: int):
        self.config = config
        self.params = params
        self.seed = seed

    # -- construction --------------------------------------------------------

    @staticmethod
    def param_spec(config: NetConfig) -> list[tuple[str, tuple, str]]:
        """(name, shape, dtype) in a fixed order; init and I/O follow it."""
        c = config
        m1, m2 = c.modes
        spec = [
            ("lift_w", (c.in_channels, c.width), "f"),
            ("lift_b", (c.width,), "f"),
        ]
        for i in range(c.depth):
            spec += [
                (f"block{i}_spec1", (c.width, c.width, m1, m2), "c"),
                (f"block{i}_spec2", (c.width, c.width, m1, m2), "c"),
                (f"block{i}_skip_w", (c.width, c.width), "f"),
                (f"block{i}_skip_b", (c.width,), "f"),
            ]
        spec += [
            ("proj1_w", (c.width, c.proj_width), "f"),
            ("proj1_b", (c.proj_width,), "f"),
            ("proj2_w", (c.proj_width, c.out_channels), "f"),
            ("proj2_b", (c.out_channels,), "f"),
        ]
        return spec

    @staticmethod
    def init(config: NetConfig, seed: int) -> "OperatorNet":
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        params = {}
        spec_scale = 1.0 / (config.width * config.width)
        for name, shape, kind in OperatorNet.param_spec(config):
            if kind == "c":
                re = rng.uniform(0.0, 1.0, shape)
                im = rng.uniform(0.0, 1.0, shape)
                params[name] = spec_scale * (re + 1j * im)
            elif name.endswith("_b"):
                params[name] = np.zeros(shape)
            else:
                bound = np.sqrt(1.0 / shape[0])
                params[name] = rng.uniform(-bound, bound, shape)
        return OperatorNet(config, params, seed)

    def param_count(self) -> int:
        """Total real degrees of freedom (complex entries count twice)."""
        total = 0
        for p in self.params.values():
            total += p.size * (2 if np.iscomplexobj(p) else 1)
        return total

    def flop_estimate(self, shape: tuple[int, int]) -> int:
        """Rough multiply-add count for one forward evaluation per sample."""
        c = self.config
        n = shape[0] * shape[1]
        m = c.modes[0] * c.modes[1]
        fft = c.depth * 2 * c.width * 5 * n * max(1, int(np.log2(n)))
        mix = c.depth * (8 * m * c.width ** 2 + 2 * n * c.width ** 2)
        head = n * (c.in_channels * c.width + c.width * c.proj_width
                    + c.proj_width * c.out_channels)
        return int(fft + mix + head)

    # -- evaluation ----------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> None:
        c = self.config
        if x.ndim != 4 or x.shape[1] != c.in_channels:
            raise ValueError(
                f"input must be (batch, {c.in_channels}, n1, n2); got {x.shape}"
            )
        m1, m2 = c.modes
        if x.shape[2] < 2 * m1 or x.shape[3] < 2 * m2:
            raise ValueError(
                f"resolution {x.shape[2:]} below mode support "
                f"(need at least {(2 * m1, 2 * m2)})"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite network input")

    def forward(self, x: np.ndarray, tape: Optional[Tape] = None) -> Tensor:
        """Evaluate on a (batch, channels, n1, n2) array at any admissible
        resolution; with a tape, parameters become differentiable leaves."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        c = self.config
        m1, m2 = c.modes
        b, _, n1, n2 = x.shape

        def p(name):
            if tape is None:
                return Tensor(self.params[name])
            return tape.leaf(name, self.params[name])

        h = _pointwise_linear(Tensor(x, tape), p("lift_w"))
        h = add(h, _reshape_bias(p("lift_b")))
        for i in range(c.depth):
            z = _fft2(_to_complex(h))
            lo = (Ellipsis, slice(0, m1), slice(0, m2))
            hi = (Ellipsis, slice(n1 - m1, n1), slice(0, m2))
            y = _assemble(
                (b, c.width, n1, n2),
                np.complex128,
                [
                    (lo, _spectral_mul(_block_get(z, lo), p(f"block{i}_spec1"))),
                    (hi, _spectral_mul(_block_get(z, hi), p(f"block{i}_spec2"))),
                ],
            )
            spec = _take_real(_ifft2(y))
            skip = _pointwise_linear(h, p(f"block{i}_skip_w"))
            h = gelu(add(add(spec, skip), _reshape_bias(p(f"block{i}_skip_b"))))
        h = _pointwise_linear(h, p("proj1_w"))
        h = gelu(add(h, _reshape_bias(p("proj1_b"))))
        h = _pointwise_linear(h, p("proj2_w"))
        return add(h, _reshape_bias(p("proj2_b")))

    def eval_at_resolution(self, x: np.ndarray) -> np.ndarray:
        """Same weights at a new grid size, no retraining, no tape."""
        return self.forward(x).value


def _reshape_bias(b: Tensor) -> Tensor:
    def vjp(g):
        _accum(b, g.reshape(b.value.shape))

    return Tensor(b.value.reshape(1, -1, 1, 1), b.tape, vjp)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def _float_view(a: np.ndarray) -> np.ndarray:
    return a.view(np.float64) if np.iscomplexobj(a) else a


def adam_init(net: OperatorNet) -> dict:
    state = {"t": 0, "m": {}, "v": {}}
    for name, val in net.params.items():
        fv = _float_view(val)
        state["m"][name] = np.zeros_like(fv)
        state["v"][name] = np.zeros_like(fv)
    return state


def adam_step(
    net: OperatorNet,
    grads: Mapping[str, np.ndarray],
    state: dict,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Adam with bias correction; complex parameters update as
    float64 pairs (consistent with the gradient convention)."""
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, pv in net.params.items():
        g = _float_view(np.ascontiguousarray(grads[name]))
        p = _float_view(pv)
        m = state["m"][name]
        v = state["v"][name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# Checkpoints (same container conventions as the dataset files)
# ---------------------------------------------------------------------------

_MAGIC = b"SYMFLOW1"


def save_checkpoint(net: OperatorNet, path: str, epoch: int,
                    meta: Optional[Mapping] = None) -> None:
    spec = OperatorNet.param_spec(net.config)
    header = json.dumps(
        {
            "schema": 1,
            "kind": "checkpoint",
            "config": net.config.to_json(),
            "seed": net.seed,
            "epoch": epoch,
            "params": [
                {"name": n, "shape": list(s), "dtype": k} for n, s, k in spec
            ],
            "meta": dict(meta or {}),
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for name, _, _ in spec:
            fh.write(np.ascontiguousarray(
                _float_view(net.params[name]), dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[OperatorNet, int, dict]:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("kind") != "checkpoint":
            raise ValueError("container is not a checkpoint")
        config = NetConfig.from_json(header["config"])
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) * (2 if entry["dtype"] == "c" else 1)
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError("truncated checkpoint payload")
            flat = np.frombuffer(raw, dtype="<f8").copy()
            if entry["dtype"] == "c":
                params[entry["name"]] = flat.view(np.complex128).reshape(shape)
            else:
                params[entry["name"]] = flat.reshape(shape)
    net = OperatorNet(config, params, header["seed"])
    return net, header["epoch"], header.get("meta", {})
