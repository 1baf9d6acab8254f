"""Small dense networks with hand-written backpropagation.

Inputs are row-major batches ``[n, in]``; a 1-D input is treated as a batch
of one and returns a 1-D output.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh")


class DimensionError(ValueError):
    pass


def _layout(layer_sizes):
    shapes = [(a, b) for a, b in zip(layer_sizes[:-1], layer_sizes[1:])]
    shapes += [(b,) for b in layer_sizes[1:]]
    return shapes


def _views(flat, shapes):
    out, off = [], 0
    for shape in shapes:
        n = math.prod(shape)
        out.append(flat[off:off + n].reshape(shape))
        off += n
    return out


class Grads:
    """Gradient buffer congruent with an :class:`AgentNet`; ``flat`` backs every view."""

    def __init__(self, flat, shapes):
        self.flat = flat
        views = _views(flat, shapes)
        half = len(views) // 2
        self.weights = views[:half]
        self.biases = views[half:]

    def arrays(self):
        return [*self.weights, *self.biases]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.flat).all())


class AgentNet:
    """Affine layers with a hidden nonlinearity and a linear or ``G * tanh`` head.

    All parameters live in one flat vector; ``weights[k]`` (shape
    ``[in, out]``) and ``biases[k]`` are views into it.
    """

    def __init__(self, layer_sizes, activation="relu", head="linear", head_scale=1.0,
                 rng=None, final_init=3e-3):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if head not in ("linear", "tanh"):
            raise ValueError(f"unknown head {head!r}")
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.activation = activation
        self.head = head
        self.head_scale = float(head_scale)
        self._bind(np.zeros(sum(math.prod(sh) for sh in _layout(self.layer_sizes))))
        rng = np.random.default_rng() if rng is None else rng
        n_layers = len(self.weights)
        for k, (fan_in, fan_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            bound = final_init if k == n_layers - 1 else 1.0 / np.sqrt(fan_in)
            self.weights[k][...] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.biases[k][...] = rng.uniform(-bound, bound, size=fan_out)

    def _bind(self, flat):
        self.shapes = _layout(self.layer_sizes)
        self.flat = flat
        views = _views(flat, self.shapes)
        half = len(views) // 2
        self.weights = views[:half]
        self.biases = views[half:]

    # -- parameters ---------------------------------------------------------

    def params(self):
        return [*self.weights, *self.biases]

    def zero_grads(self) -> Grads:
        return Grads(np.zeros_like(self.flat), self.shapes)

    def copy(self) -> "AgentNet":
        other = object.__new__(AgentNet)
        other.layer_sizes = list(self.layer_sizes)
        other.activation = self.activation
        other.head = self.head
        other.head_scale = self.head_scale
        other._bind(self.flat.copy())
        return other

    def load_from(self, other: "AgentNet") -> None:
        self.flat[...] = other.flat

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.flat).all())

    # -- forward / backward -------------------------------------------------

    def _act(self, z):
        return np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)

    def _act_grad(self, z, a):
        return (z > 0.0).astype(z.dtype) if self.activation == "relu" else 1.0 - a * a

    def forward(self, x, return_cache=False):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.layer_sizes[0]:
            raise DimensionError(f"expected input width {self.layer_sizes[0]}, got {h.shape[1]}")
        zs, hs = [], [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            zs.append(z)
            if k < last:
                h = self._act(z)
            elif self.head == "tanh":
                h = self.head_scale * np.tanh(z)
            else:
                h = z
            hs.append(h)
        out = h[0] if single else h
        if return_cache:
            return out, (zs, hs, single)
        return out

    __call__ = forward

    def backward(self, cache, upstream, param_grads=True):
        """Gradients of ``sum(upstream * output)`` w.r.t. parameters and input.

        With ``param_grads=False`` only the input gradient is computed and the
        first element of the result is ``None``.
        """
        zs, hs, single = cache
        g = np.asarray(upstream, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != hs[-1].shape:
            raise DimensionError(f"upstream shape {g.shape} != output shape {hs[-1].shape}")
        last = len(self.weights) - 1
        grads = self.zero_grads() if param_grads else None
        for k in range(last, -1, -1):
            if k == last:
                if self.head == "tanh":
                    t = hs[-1] / self.head_scale
                    g = g * self.head_scale * (1.0 - t * t)
            else:
                g = g * self._act_grad(zs[k], hs[k + 1])
            if param_grads:
                np.matmul(hs[k].T, g, out=grads.weights[k])
                g.sum(axis=0, out=grads.biases[k])
            g = g @ self.weights[k].T
        dx = g[0] if single else g
        return grads, dx


def sgd_step(net: AgentNet, grads: Grads, lr: float) -> bool:
    """In-place ``param -= lr * grad``. Non-finite gradients leave ``net`` untouched."""
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    if not grads.is_finite():
        log.warning("rejected update: non-finite gradient")
        return False
    net.flat -= lr * grads.flat
    return True


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, net: AgentNet, grads: Grads) -> bool:
        return sgd_step(net, grads, self.lr)

    def state(self) -> dict:
        return {"kind": "sgd", "lr": self.lr}

    def load_state(self, state: dict) -> None:
        self.lr = state["lr"]


class Adam:
    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, net: AgentNet, grads: Grads) -> bool:
        if not grads.is_finite():
            log.warning("rejected update: non-finite gradient")
            return False
        if self.m is None:
            self.m = np.zeros_like(net.flat)
            self.v = np.zeros_like(net.flat)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        g = grads.flat
        m, v = self.m, self.v
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * (g * g)
        net.flat -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
        return True

    def state(self) -> dict:
        return {"kind": "adam", "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state: dict) -> None:
        self.lr, self.beta1, self.beta2 = state["lr"], state["beta1"], state["beta2"]
        self.eps, self.t = state["eps"], state["t"]
        self.m = None if state["m"] is None else state["m"].copy()
        self.v = None if state["v"] is None else state["v"].copy()


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return SGD(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")


# -- checkpoint format ---------------------------------------------------------
#
#   magic b"TRLNET", u16 version, u32 manifest length, manifest JSON (utf-8),
#   then every weight matrix followed by every bias vector as little-endian f64.

MAGIC = b"TRLNET"
VERSION = 1


def net_to_bytes(net: AgentNet) -> bytes:
    manifest = {
        "layer_sizes": net.layer_sizes,
        "activation": net.activation,
        "head": net.head,
        "head_scale": net.head_scale,
        "shapes": [list(p.shape) for p in net.params()],
    }
    m = json.dumps(manifest, sort_keys=True).encode()
    body = np.ascontiguousarray(net.flat, dtype="<f8").tobytes()
    return MAGIC + struct.pack("<HI", VERSION, len(m)) + m + body


def net_from_bytes(data: bytes) -> AgentNet:
    if data[:6] != MAGIC:
        raise ValueError("not a network checkpoint")
    version, mlen = struct.unpack("<HI", data[6:12])
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    manifest = json.loads(data[12:12 + mlen])
    net = AgentNet(manifest["layer_sizes"], manifest["activation"], manifest["head"],
                   manifest["head_scale"], rng=np.random.default_rng(0))
    if [list(sh) for sh in net.shapes] != manifest["shapes"]:
        raise ValueError("layer manifest does not match layer sizes")
    offset = 12 + mlen
    n = net.flat.size
    if len(data) - offset != 8 * n:
        raise ValueError(f"expected {8 * n} parameter bytes, got {len(data) - offset}")
    net.flat[...] = np.frombuffer(data, dtype="<f8", count=n, offset=offset)
    return net


def save_net(net: AgentNet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(net_to_bytes(net))


def load_net(path) -> AgentNet:
    with open(path, "rb") as fh:
        return net_from_bytes(fh.read())
