"""Recurrent value/policy network with hand-rolled exact gradients.

A bi-directional GRU encodes the (variable-length) human sequence of one
timestep; a separate GRU carries the robot state across timesteps and is
the network's memory. Attention pools the human codes into a crowd
feature, and an MLP trunk feeds a scalar value head and a categorical
policy head. All arithmetic is float64.
"""

from __future__ import annotations

import numpy as np

from .kernels import gru_seq_backward, gru_seq_forward

HUMAN_DIM = 7
ROBOT_DIM = 5
HIDDEN = 20
CODE_DIM = 2 * HIDDEN
MLP_F_DIMS = (CODE_DIM + HIDDEN, 150, 100)
MLP_TAU_DIMS = (CODE_DIM + HIDDEN, 100, 100, 1)
MLP_THETA_DIMS = (100 + HIDDEN, 150, 100, 100)
N_ACTIONS = 81

GRU_SLOTS = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")


class NumericError(FloatingPointError):
    """A forward pass produced a non-finite activation."""


def _gru_shapes(input_dim: int) -> dict[str, tuple[int, ...]]:
    return {
        "W_z": (HIDDEN, input_dim), "W_r": (HIDDEN, input_dim), "W_h": (HIDDEN, input_dim),
        "U_z": (HIDDEN, HIDDEN), "U_r": (HIDDEN, HIDDEN), "U_h": (HIDDEN, HIDDEN),
        "b_z": (HIDDEN,), "b_r": (HIDDEN,), "b_h": (HIDDEN,),
    }


def _mlp_shapes(prefix: str, dims: tuple[int, ...]) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for i in range(len(dims) - 1):
        shapes[f"{prefix}.{i}.W"] = (dims[i + 1], dims[i])
        shapes[f"{prefix}.{i}.b"] = (dims[i + 1],)
    return shapes


def parameter_shapes(n_actions: int = N_ACTIONS) -> dict[str, tuple[int, ...]]:
    """Canonical parameter layout: name -> shape."""
    shapes: dict[str, tuple[int, ...]] = {}
    for prefix, in_dim in (("human_fwd", HUMAN_DIM), ("human_bwd", HUMAN_DIM), ("robot_gru", ROBOT_DIM)):
        for slot, shape in _gru_shapes(in_dim).items():
            shapes[f"{prefix}.{slot}"] = shape
    shapes.update(_mlp_shapes("mlp_f", MLP_F_DIMS))
    shapes.update(_mlp_shapes("mlp_tau", MLP_TAU_DIMS))
    shapes.update(_mlp_shapes("mlp_theta", MLP_THETA_DIMS))
    shapes["value_head.W"] = (1, MLP_THETA_DIMS[-1])
    shapes["value_head.b"] = (1,)
    shapes["policy_head.W"] = (n_actions, MLP_THETA_DIMS[-1])
    shapes["policy_head.b"] = (n_actions,)
    return shapes


class NetworkParameters:
    """Flat named-tensor parameter set with a fixed canonical order."""

    def __init__(self, params: dict[str, np.ndarray], n_actions: int = N_ACTIONS):
        expected = parameter_shapes(n_actions)
        if set(params) != set(expected):
            missing = set(expected) - set(params)
            extra = set(params) - set(expected)
            raise ValueError(f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"parameter {name}: expected shape {shape}, got {params[name].shape}")
        self.params = {name: np.asarray(params[name], dtype=float) for name in sorted(params)}
        self.n_actions = n_actions

    @classmethod
    def init(cls, seed: int = 0, n_actions: int = N_ACTIONS) -> "NetworkParameters":
        """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in sorted(parameter_shapes(n_actions).items()):
            if len(shape) == 1:
                params[name] = np.zeros(shape)
            else:
                bound = np.sqrt(6.0 / (shape[0] + shape[1]))
                params[name] = rng.uniform(-bound, bound, size=shape)
        return cls(params, n_actions)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(a) for name, a in self.params.items()}

    def copy(self) -> "NetworkParameters":
        return NetworkParameters({k: v.copy() for k, v in self.params.items()}, self.n_actions)

    def gru(self, prefix: str) -> tuple[np.ndarray, ...]:
        return tuple(self.params[f"{prefix}.{slot}"] for slot in GRU_SLOTS)

    def mlp(self, prefix: str) -> list[tuple[np.ndarray, np.ndarray]]:
        layers = []
        i = 0
        while f"{prefix}.{i}.W" in self.params:
            layers.append((self.params[f"{prefix}.{i}.W"], self.params[f"{prefix}.{i}.b"]))
            i += 1
        return layers


def gru_cell(layer: tuple[np.ndarray, ...], x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Single GRU step for 1-D x and h (reference path; the scans batch this)."""
    hs, _ = gru_seq_forward(*layer, x.reshape(1, 1, -1), h.reshape(1, -1))
    return hs[0, 0]


def _mlp_forward(layers, x):
    """ReLU hidden layers, linear output. Returns (output, cache)."""
    pre_acts = []
    inputs = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        a = h @ w.T + b
        pre_acts.append(a)
        h = np.maximum(a, 0.0) if i < len(layers) - 1 else a
        inputs.append(h)
    return h, (inputs, pre_acts)


def _mlp_backward(layers, cache, dout, prefix, grads):
    inputs, pre_acts = cache
    d = dout
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        if i < len(layers) - 1:
            d = d * (pre_acts[i] > 0.0)
        grads[f"{prefix}.{i}.W"] += d.T @ inputs[i]
        grads[f"{prefix}.{i}.b"] += d.sum(axis=0)
        d = d @ w
    return d


def _softmax(x, axis=-1):
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def encode_humans(params: NetworkParameters, humans: np.ndarray) -> np.ndarray:
    """Bi-GRU codes for a (n, 7) human array -> (n, 40)."""
    if humans.shape[0] == 0:
        return np.zeros((0, CODE_DIM))
    out = forward_batch(params, humans[None, :, :], np.zeros((1, ROBOT_DIM)), np.zeros((1, HIDDEN)))
    return out["trace"]["codes"][0]


def encode_robot(params: NetworkParameters, s_r: np.ndarray, h_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One robot-GRU step; the returned hidden state is both output and memory."""
    h = gru_cell(params.gru("robot_gru"), np.asarray(s_r, dtype=float), np.asarray(h_prev, dtype=float))
    return h, h


def attention_pool(params: NetworkParameters, s_r_hat: np.ndarray, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Softmax-weighted pooling of per-human interaction features.

    Returns (crowd_feature, weights); an empty crowd pools to zeros.
    """
    n = codes.shape[0]
    if n == 0:
        return np.zeros(MLP_F_DIMS[-1]), np.zeros(0)
    att_in = np.concatenate([np.repeat(s_r_hat[None, :], n, axis=0), codes], axis=1)
    f, _ = _mlp_forward(params.mlp("mlp_f"), att_in)
    tau, _ = _mlp_forward(params.mlp("mlp_tau"), att_in)
    weights = _softmax(tau[:, 0], axis=0)
    return weights @ f, weights


def forward_batch(
    params: NetworkParameters,
    humans: np.ndarray,
    robot: np.ndarray,
    h_prev: np.ndarray,
) -> dict:
    """Batched forward pass.

    humans: (B, n, 7) with one shared crowd size n (0 allowed);
    robot: (B, 5); h_prev: (B, 20).
    Returns V (B,), pi (B, A), logits (B, A), h_next (B, 20), trace.
    """
    b, n, _ = humans.shape
    trace: dict = {"n": n, "b": b}

    robot_x = robot[:, None, :]
    hs_r, cache_r = gru_seq_forward(*params.gru("robot_gru"), robot_x, np.asarray(h_prev, dtype=float))
    s_r_hat = hs_r[:, 0, :]
    trace["cache_r"] = cache_r

    if n > 0:
        hf, cache_f = gru_seq_forward(*params.gru("human_fwd"), humans, np.zeros((b, HIDDEN)))
        hb_rev, cache_b = gru_seq_forward(*params.gru("human_bwd"), humans[:, ::-1, :], np.zeros((b, HIDDEN)))
        hb = hb_rev[:, ::-1, :]
        codes = np.concatenate([hf, hb], axis=2)  # (B, n, 40)
        att_in = np.concatenate(
            [np.repeat(s_r_hat[:, None, :], n, axis=1), codes], axis=2
        ).reshape(b * n, CODE_DIM + HIDDEN)
        f_flat, cache_mf = _mlp_forward(params.mlp("mlp_f"), att_in)
        tau_flat, cache_mt = _mlp_forward(params.mlp("mlp_tau"), att_in)
        f = f_flat.reshape(b, n, MLP_F_DIMS[-1])
        tau = tau_flat.reshape(b, n)
        weights = _softmax(tau, axis=1)
        crowd = np.einsum("bn,bnf->bf", weights, f)
        trace.update(cache_f=cache_f, cache_b=cache_b, codes=codes,
                     cache_mf=cache_mf, cache_mt=cache_mt, f=f, weights=weights)
    else:
        weights = np.zeros((b, 0))
        crowd = np.zeros((b, MLP_F_DIMS[-1]))
        trace["weights"] = weights

    q_in = np.concatenate([crowd, s_r_hat], axis=1)
    q, cache_q = _mlp_forward(params.mlp("mlp_theta"), q_in)
    wv, bv = params.params["value_head.W"], params.params["value_head.b"]
    wp, bp = params.params["policy_head.W"], params.params["policy_head.b"]
    value = (q @ wv.T + bv)[:, 0]
    logits = q @ wp.T + bp
    pi = _softmax(logits, axis=1)
    trace.update(cache_q=cache_q, q=q, s_r_hat=s_r_hat, pi=pi)

    if not (np.isfinite(value).all() and np.isfinite(logits).all()):
        raise NumericError("non-finite activation in forward pass")

    return {
        "V": value, "pi": pi, "logits": logits,
        "h_next": s_r_hat, "attention": weights, "trace": trace,
    }


def backward_batch(
    params: NetworkParameters,
    trace: dict,
    d_value: np.ndarray,
    d_logits: np.ndarray | None = None,
    d_pi: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Exact gradients of sum(d_value * V + d_logits * logits) w.r.t. parameters.

    d_pi, when given instead of d_logits, is mapped through the softmax
    jacobian. Returns a dict in the same named layout as the parameters.
    """
    b, n = trace["b"], trace["n"]
    d_value = np.asarray(d_value, dtype=float).reshape(b)
    if d_logits is None:
        if d_pi is not None:
            pi = trace["pi"]
            d_logits = pi * (d_pi - (pi * d_pi).sum(axis=1, keepdims=True))
        else:
            d_logits = np.zeros((b, params.n_actions))

    grads = params.zeros_like()
    q = trace["q"]
    wv = params.params["value_head.W"]
    wp = params.params["policy_head.W"]

    grads["value_head.W"] += d_value[None, :] @ q
    grads["value_head.b"] += np.array([d_value.sum()])
    grads["policy_head.W"] += d_logits.T @ q
    grads["policy_head.b"] += d_logits.sum(axis=0)

    dq = d_value[:, None] * wv + d_logits @ wp
    dq_in = _mlp_backward(params.mlp("mlp_theta"), trace["cache_q"], dq, "mlp_theta", grads)
    d_crowd = dq_in[:, : MLP_F_DIMS[-1]]
    d_s_r = dq_in[:, MLP_F_DIMS[-1]:].copy()

    if n > 0:
        f, weights = trace["f"], trace["weights"]
        df = weights[:, :, None] * d_crowd[:, None, :]
        dw = np.einsum("bf,bnf->bn", d_crowd, f)
        dtau = weights * (dw - (weights * dw).sum(axis=1, keepdims=True))

        datt = _mlp_backward(
            params.mlp("mlp_f"), trace["cache_mf"],
            df.reshape(b * n, MLP_F_DIMS[-1]), "mlp_f", grads,
        )
        datt += _mlp_backward(
            params.mlp("mlp_tau"), trace["cache_mt"],
            dtau.reshape(b * n, 1), "mlp_tau", grads,
        )
        datt = datt.reshape(b, n, CODE_DIM + HIDDEN)
        d_s_r += datt[:, :, :HIDDEN].sum(axis=1)
        d_codes = datt[:, :, HIDDEN:]

        g_f, _ = gru_seq_backward(*params.gru("human_fwd"), trace["cache_f"],
                                  np.ascontiguousarray(d_codes[:, :, :HIDDEN]))
        g_b, _ = gru_seq_backward(*params.gru("human_bwd"), trace["cache_b"],
                                  np.ascontiguousarray(d_codes[:, ::-1, HIDDEN:]))
        for slot, g in zip(GRU_SLOTS, g_f):
            grads[f"human_fwd.{slot}"] += g
        for slot, g in zip(GRU_SLOTS, g_b):
            grads[f"human_bwd.{slot}"] += g

    g_r, _ = gru_seq_backward(*params.gru("robot_gru"), trace["cache_r"], d_s_r[:, None, :])
    for slot, g in zip(GRU_SLOTS, g_r):
        grads[f"robot_gru.{slot}"] += g

    return grads


def forward(params: NetworkParameters, humans: np.ndarray, robot: np.ndarray, h_prev: np.ndarray) -> dict:
    """Single-sample forward; humans (n, 7), robot (5,), h_prev (20,)."""
    out = forward_batch(params, humans[None, :, :], robot[None, :], h_prev[None, :])
    return {
        "V": float(out["V"][0]),
        "pi": out["pi"][0],
        "logits": out["logits"][0],
        "h_next": out["h_next"][0],
        "attention": out["attention"][0],
        "trace": out["trace"],
    }
