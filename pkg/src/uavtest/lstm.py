"""Hand-rolled LSTM Q-network with exact backpropagation through time.

The network stacks recurrent layers (tanh cell activation, sigmoid gates)
under a linear head that maps the top hidden state to one Q-value per
action.  All parameters live in one flat float64 vector with named views,
which keeps Adam updates, finite-difference checks, and serialization
trivial.

Gate order inside each layer's weight block is ``[input, forget, cell,
output]``.  Initialization draws every weight and bias uniformly from
``[-1/sqrt(hidden), +1/sqrt(hidden)]`` and then offsets the forget-gate
bias by +1.  Hidden and cell states reset to zero at the start of every
sequence (one sequence per decision window).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LstmNetwork",
    "AdamState",
    "NetworkError",
    "init_network",
    "parameter_count",
    "forward",
    "forward_batch",
    "backward",
    "backward_batch",
    "huber_loss",
    "adam_step",
    "network_to_bytes",
    "network_from_bytes",
    "save_network",
    "load_network",
]

MAGIC = b"UAVQNET\x01"


class NetworkError(ValueError):
    pass


def parameter_count(input_dim: int, hidden_dim: int, layers: int, action_count: int) -> int:
    """Closed form: 4h(in + h + 1) per layer (layer 0 sees the input, the
    rest see the hidden state below) plus the linear head."""
    total = 0
    for layer in range(layers):
        in_l = input_dim if layer == 0 else hidden_dim
        total += 4 * hidden_dim * (in_l + hidden_dim + 1)
    total += action_count * hidden_dim + action_count
    return total


@dataclass
class LstmNetwork:
    input_dim: int
    hidden_dim: int
    layers: int
    actions: tuple[str, ...]
    params: np.ndarray  # flat float64 vector

    @property
    def action_count(self) -> int:
        return len(self.actions)

    def views(self):
        """Per-layer (Wx, Wh, b) views plus (W_head, b_head), sharing the
        flat parameter buffer."""
        h = self.hidden_dim
        out = []
        offset = 0
        p = self.params
        for layer in range(self.layers):
            in_l = self.input_dim if layer == 0 else h
            wx = p[offset : offset + 4 * h * in_l].reshape(4 * h, in_l)
            offset += 4 * h * in_l
            wh = p[offset : offset + 4 * h * h].reshape(4 * h, h)
            offset += 4 * h * h
            b = p[offset : offset + 4 * h]
            offset += 4 * h
            out.append((wx, wh, b))
        a = self.action_count
        w_head = p[offset : offset + a * h].reshape(a, h)
        offset += a * h
        b_head = p[offset : offset + a]
        offset += a
        assert offset == p.size
        return out, (w_head, b_head)

    def copy(self) -> "LstmNetwork":
        return LstmNetwork(
            self.input_dim, self.hidden_dim, self.layers, self.actions, self.params.copy()
        )


def init_network(
    seed: int,
    input_dim: int,
    hidden_dim: int,
    layers: int,
    actions,
) -> LstmNetwork:
    """Deterministic per seed.  ``actions`` may be a count or the action
    names themselves (names are kept for checkpoint compatibility checks)."""
    if isinstance(actions, int):
        actions = tuple(f"a{i}" for i in range(actions))
    else:
        actions = tuple(actions)
    if input_dim <= 0 or hidden_dim <= 0 or layers <= 0 or not actions:
        raise NetworkError("all network dimensions must be positive")
    n = parameter_count(input_dim, hidden_dim, layers, len(actions))
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(hidden_dim)
    params = rng.uniform(-bound, bound, size=n)
    net = LstmNetwork(input_dim, hidden_dim, layers, actions, params)
    h = hidden_dim
    layer_views, _head = net.views()
    for _wx, _wh, b in layer_views:
        b[h : 2 * h] += 1.0  # forget gate starts open
    return net


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def forward_batch(net: LstmNetwork, x: np.ndarray, need_cache: bool = False):
    """Run sequences through the network.

    ``x`` has shape (batch, length, input_dim).  Returns ``(q, hidden,
    cell, cache)`` where ``q`` is (batch, length, actions) and hidden/cell
    are the final per-layer states, shape (layers, batch, hidden).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != net.input_dim:
        raise NetworkError(
            f"expected input of shape (batch, length, {net.input_dim}), got {x.shape}"
        )
    batch, length, _ = x.shape
    h_dim = net.hidden_dim
    layer_views, (w_head, b_head) = net.views()

    h = np.zeros((net.layers, batch, h_dim))
    c = np.zeros((net.layers, batch, h_dim))
    q = np.empty((batch, length, net.action_count))
    cache = [] if need_cache else None

    for t in range(length):
        inp = x[:, t, :]
        step_cache = [] if need_cache else None
        for layer, (wx, wh, b) in enumerate(layer_views):
            z = inp @ wx.T + h[layer] @ wh.T + b
            i = _sigmoid(z[:, 0:h_dim])
            f = _sigmoid(z[:, h_dim : 2 * h_dim])
            g = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
            o = _sigmoid(z[:, 3 * h_dim : 4 * h_dim])
            c_new = f * c[layer] + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            if need_cache:
                step_cache.append(
                    (inp, h[layer].copy(), c[layer].copy(), i, f, g, o, tanh_c)
                )
            h[layer] = h_new
            c[layer] = c_new
            inp = h_new
        q[:, t, :] = inp @ w_head.T + b_head
        if need_cache:
            cache.append(step_cache)
    return q, h, c, cache


def forward(net: LstmNetwork, sequence):
    """Single-sequence forward: ``sequence`` is (length, input_dim).
    Returns (q_rows, final_hidden, final_cell)."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 2:
        raise NetworkError(f"expected a (length, input_dim) sequence, got {seq.shape}")
    q, h, c, _ = forward_batch(net, seq[None, :, :])
    return q[0], h[:, 0, :], c[:, 0, :]


def huber_loss(pred, target):
    """Smooth-L1: 0.5 d^2 inside |d| < 1, |d| - 0.5 outside; mean over all
    elements.  Returns (loss, gradient w.r.t. pred)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    d = pred - target
    abs_d = np.abs(d)
    quadratic = abs_d < 1.0
    losses = np.where(quadratic, 0.5 * d * d, abs_d - 0.5)
    n = d.size if d.size else 1
    grad = np.clip(d, -1.0, 1.0) / n
    return float(losses.mean()) if d.size else 0.0, grad


def backward_batch(net: LstmNetwork, x, cache, actions, targets) -> tuple[float, np.ndarray]:
    """Gradient of the mean Huber loss between the last-step Q-values of the
    selected ``actions`` and ``targets``, w.r.t. every parameter.

    ``cache`` comes from ``forward_batch(..., need_cache=True)`` on ``x``.
    Returns (loss, flat gradient vector).
    """
    x = np.asarray(x, dtype=np.float64)
    batch, length, _ = x.shape
    h_dim = net.hidden_dim
    layer_views, (w_head, b_head) = net.views()

    top = cache[length - 1][net.layers - 1]
    # recompute the top hidden state of the last step from its cache entry
    h_last = top[6] * top[7]  # o * tanh(c)
    q_last = h_last @ w_head.T + b_head
    idx = np.arange(batch)
    q_sel = q_last[idx, actions]
    loss, dq_sel = huber_loss(q_sel, targets)

    grads = np.zeros_like(net.params)
    g_layers, (g_w_head, g_b_head) = LstmNetwork(
        net.input_dim, net.hidden_dim, net.layers, net.actions, grads
    ).views()

    dq = np.zeros((batch, net.action_count))
    dq[idx, actions] = dq_sel
    g_w_head += dq.T @ h_last
    g_b_head += dq.sum(axis=0)

    dh_carry = [np.zeros((batch, h_dim)) for _ in range(net.layers)]
    dc_carry = [np.zeros((batch, h_dim)) for _ in range(net.layers)]
    dh_top_extra = dq @ w_head  # only the last timestep feeds the loss

    for t in range(length - 1, -1, -1):
        dx_above = None
        for layer in range(net.layers - 1, -1, -1):
            inp, h_prev, c_prev, i, f, g, o, tanh_c = cache[t][layer]
            dh = dh_carry[layer].copy()
            if layer == net.layers - 1 and t == length - 1:
                dh += dh_top_extra
            if dx_above is not None:
                dh += dx_above
            dc = dh * o * (1.0 - tanh_c * tanh_c) + dc_carry[layer]
            do = dh * tanh_c
            da_o = do * o * (1.0 - o)
            da_i = dc * g * i * (1.0 - i)
            da_g = dc * i * (1.0 - g * g)
            da_f = dc * c_prev * f * (1.0 - f)
            dc_carry[layer] = dc * f
            da = np.concatenate([da_i, da_f, da_g, da_o], axis=1)
            wx, wh, _b = layer_views[layer]
            g_wx, g_wh, g_b = g_layers[layer]
            g_wx += da.T @ inp
            g_wh += da.T @ h_prev
            g_b += da.sum(axis=0)
            dx_above = da @ wx
            dh_carry[layer] = da @ wh
        # dx_above of layer 0 is the gradient w.r.t. the input; discarded
    return loss, grads


def backward(net: LstmNetwork, sequence, selected_action: int, td_target: float):
    """Single-sequence convenience wrapper around ``backward_batch``."""
    seq = np.asarray(sequence, dtype=np.float64)[None, :, :]
    _q, _h, _c, cache = forward_batch(net, seq, need_cache=True)
    _loss, grads = backward_batch(
        net, seq, cache, np.array([selected_action]), np.array([float(td_target)])
    )
    return grads


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_network(cls, net: LstmNetwork) -> "AdamState":
        return cls(np.zeros_like(net.params), np.zeros_like(net.params))


def adam_step(net: LstmNetwork, grads: np.ndarray, adam: AdamState, lr: float = 0.001):
    """Bias-corrected Adam update, in place on ``net.params``."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != net.params.shape:
        raise NetworkError(
            f"gradient shape {grads.shape} does not match parameters {net.params.shape}"
        )
    adam.step += 1
    adam.m = adam.beta1 * adam.m + (1.0 - adam.beta1) * grads
    adam.v = adam.beta2 * adam.v + (1.0 - adam.beta2) * grads * grads
    m_hat = adam.m / (1.0 - adam.beta1**adam.step)
    v_hat = adam.v / (1.0 - adam.beta2**adam.step)
    net.params -= lr * m_hat / (np.sqrt(v_hat) + adam.eps)
    return net, adam


# ---------------------------------------------------------------------------
# serialization: magic, u32 header length, JSON header, float64 LE payload


def _pack(header: dict, arrays: list[np.ndarray]) -> bytes:
    header = dict(header)
    header["arrays"] = [int(a.size) for a in arrays]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = [MAGIC, struct.pack("<I", len(blob)), blob]
    for a in arrays:
        out.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(out)


def _unpack(data: bytes) -> tuple[dict, list[np.ndarray]]:
    if data[: len(MAGIC)] != MAGIC:
        raise NetworkError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    header = json.loads(data[start : start + hlen].decode("utf-8"))
    arrays = []
    offset = start + hlen
    for size in header["arrays"]:
        end = offset + 8 * size
        if end > len(data):
            raise NetworkError("checkpoint truncated")
        arrays.append(np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64))
        offset = end
    if offset != len(data):
        raise NetworkError("trailing bytes in checkpoint")
    return header, arrays


def network_to_bytes(net: LstmNetwork, extra: dict | None = None,
                     extra_arrays: list[tuple[str, np.ndarray]] | None = None) -> bytes:
    header = {
        "format": 1,
        "kind": "network" if not extra_arrays else "train-state",
        "input_dim": net.input_dim,
        "hidden_dim": net.hidden_dim,
        "layers": net.layers,
        "actions": list(net.actions),
        "meta": extra or {},
        "array_names": ["params"] + [name for name, _ in (extra_arrays or [])],
    }
    arrays = [net.params] + [a for _, a in (extra_arrays or [])]
    return _pack(header, arrays)


def network_from_bytes(data: bytes):
    """Returns (net, meta dict, named extra arrays)."""
    header, arrays = _unpack(data)
    if header.get("format") != 1:
        raise NetworkError(f"unsupported checkpoint format {header.get('format')!r}")
    net = LstmNetwork(
        header["input_dim"],
        header["hidden_dim"],
        header["layers"],
        tuple(header["actions"]),
        arrays[0],
    )
    expected = parameter_count(
        net.input_dim, net.hidden_dim, net.layers, net.action_count
    )
    if net.params.size != expected:
        raise NetworkError(
            f"parameter payload has {net.params.size} values, expected {expected}"
        )
    named = dict(zip(header["array_names"][1:], arrays[1:]))
    return net, header.get("meta", {}), named


def save_network(net: LstmNetwork, path, extra=None, extra_arrays=None) -> None:
    data = network_to_bytes(net, extra, extra_arrays)
    with open(path, "wb") as fh:
        fh.write(data)


def load_network(path):
    with open(path, "rb") as fh:
        return network_from_bytes(fh.read())
