"""Dense networks in float64 with hand-written gradients, Adam and a tanh-squashed Gaussian head."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)

CHECKPOINT_MAGIC = b"TRLCKPT\x00"
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    """weights[i] has shape (out, in); activation applies after every layer except the last."""

    weights: list
    biases: list
    activations: list

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("one weight, bias and activation per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: bias length {b.shape[0]} != output dim {w.shape[0]}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dim {w.shape[1]} != previous output {self.weights[i - 1].shape[0]}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], list(self.activations))

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def init_mlp(sizes, rng: np.random.Generator, out_scale: float = 1.0, activation: str = "relu") -> MlpParams:
    """Uniform fan-in initialisation; the last layer is scaled by ``out_scale``."""
    ws, bs, acts = [], [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / math.sqrt(n_in)
        last = i == len(sizes) - 2
        scale = out_scale if last else 1.0
        ws.append(rng.uniform(-bound, bound, size=(n_out, n_in)) * scale)
        bs.append(rng.uniform(-bound, bound, size=n_out) * scale)
        acts.append("identity" if last else activation)
    return MlpParams(ws, bs, acts)


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def mlp_forward(p: MlpParams, x, cache: bool = False):
    """Forward pass.  With ``cache=True`` also returns what backward needs."""
    h, single = _as_batch(x)
    if h.shape[1] != p.in_dim:
        raise ValueError(f"input dim {h.shape[1]} != network input dim {p.in_dim}")
    acts = [h]
    for w, b, act in zip(p.weights, p.biases, p.activations):
        h = h @ w.T + b
        if act == "relu":
            h = np.maximum(h, 0.0)
        acts.append(h)
    out = h[0] if single else h
    return (out, (acts, single)) if cache else out


def mlp_backward(p: MlpParams, cache, upstream, param_grads: bool = True):
    """Reverse pass: (list of (dW, db), input gradient).

    ``param_grads=False`` skips the parameter gradients (list entries are None).
    """
    acts, single = cache
    g = np.asarray(upstream, dtype=np.float64)
    if single:
        g = g[None, :]
    if g.shape != acts[-1].shape:
        raise ValueError(f"upstream shape {g.shape} != output shape {acts[-1].shape}")
    grads = [None] * len(p.weights)
    for i in range(len(p.weights) - 1, -1, -1):
        if p.activations[i] == "relu":
            g = g * (acts[i + 1] > 0.0)
        if param_grads:
            grads[i] = (g.T @ acts[i], g.sum(axis=0))
        g = g @ p.weights[i]
    return grads, (g[0] if single else g)


@dataclass
class Adam:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def state_arrays(self) -> list:
        return self.m + self.v


def adam_update(params: list, grads: list, opt: Adam) -> None:
    """In-place Adam step over matching lists of arrays."""
    if not opt.m:
        opt.m = [np.zeros_like(a) for a in params]
        opt.v = [np.zeros_like(a) for a in params]
    if len(grads) != len(params):
        raise ValueError("one gradient per parameter array")
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1**opt.step
    c2 = 1.0 - b2**opt.step
    for a, g, m, v in zip(params, grads, opt.m, opt.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        a -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)


def flat_grads(grads) -> list:
    out = []
    for dw, db in grads:
        out += [dw, db]
    return out


def squashed_gaussian(mean, log_std, noise=None):
    """tanh(mean + std * noise) and its log-density; ``noise=None`` gives tanh(mean).

    Works on a single vector or a batch (rows); log_prob sums over the last axis.
    """
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.clip(np.asarray(log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
    eps = np.zeros_like(mean) if noise is None else np.asarray(noise, dtype=np.float64)
    u = mean + np.exp(log_std) * eps
    action = np.tanh(u)
    # log(1 - tanh(u)^2) in a form that stays finite for large |u|
    log_det = 2.0 * (LOG_2 - u - np.logaddexp(0.0, -2.0 * u))
    log_prob = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG_2PI - log_det, axis=-1)
    return action, log_prob


@dataclass
class GaussianSample:
    """Reparameterised draw kept for the policy gradient."""

    mean: np.ndarray
    log_std_raw: np.ndarray
    log_std: np.ndarray
    eps: np.ndarray
    u: np.ndarray
    action: np.ndarray
    log_prob: np.ndarray


def sample_head(head_out: np.ndarray, noise: np.ndarray) -> GaussianSample:
    n = head_out.shape[-1] // 2
    mean, raw = head_out[..., :n], head_out[..., n:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    u = mean + np.exp(log_std) * noise
    action, log_prob = squashed_gaussian(mean, log_std, noise)
    return GaussianSample(mean, raw, log_std, noise, u, action, log_prob)


def head_gradient(s: GaussianSample, d_action: np.ndarray, d_logp: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the raw head output given dL/daction and dL/dlog_prob (per row)."""
    t = s.action
    d_logp = np.asarray(d_logp)[..., None]
    # log_prob depends on u through -log(1 - tanh(u)^2), whose derivative is 2 tanh(u)
    d_u = d_action * (1.0 - t * t) + d_logp * 2.0 * t
    std = np.exp(s.log_std)
    d_log_std = d_u * std * s.eps - d_logp
    d_log_std = d_log_std * ((s.log_std_raw > LOG_STD_MIN) & (s.log_std_raw < LOG_STD_MAX))
    return np.concatenate([d_u, d_log_std], axis=-1)


# -- checkpoints ------------------------------------------------------------


def save_arrays(path, arrays: dict, meta: dict | None = None) -> None:
    """Binary checkpoint: magic, u32 header length, JSON header, little-endian f8 payload.

    The header lists every array name and shape in payload order.
    """
    names = list(arrays)
    header = {
        "version": CHECKPOINT_VERSION,
        "arrays": [[n, list(np.shape(arrays[n]))] for n in names],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes())


def load_arrays(path) -> tuple[dict, dict]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen])
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    pos = 12 + hlen
    out = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        out[name] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return out, header["meta"]


def mlp_to_arrays(prefix: str, p: MlpParams) -> dict:
    out = {}
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        out[f"{prefix}.{i}.w"] = w
        out[f"{prefix}.{i}.b"] = b
    return out


def mlp_from_arrays(prefix: str, arrays: dict, activation: str = "relu") -> MlpParams:
    ws, bs = [], []
    i = 0
    while f"{prefix}.{i}.w" in arrays:
        ws.append(arrays[f"{prefix}.{i}.w"].copy())
        bs.append(arrays[f"{prefix}.{i}.b"].copy())
        i += 1
    if not ws:
        raise KeyError(f"no layers under '{prefix}'")
    acts = [activation] * (len(ws) - 1) + ["identity"]
    return MlpParams(ws, bs, acts)
