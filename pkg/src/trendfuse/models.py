"""Predictor zoo: recurrent cells, a feedforward baseline, and the output head.

All cells operate on row-batches: step input x is (B, I), states are
(B, H). Gate weights act on the concatenated [h_prev, x] row, matching
the classic formulation. Variants are written so that specific parameter
settings collapse them exactly onto the plain LSTM, which the test suite
uses as a correctness oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import numerics as nm
from .errors import ConfigError, ContractError, ShapeError
from .numerics import ParameterStore, Tensor

VALID_KINDS = ("feedforward", "lstm", "bilstm", "gru", "mogrifier", "stlstm", "swinlstm")

RECURRENT_KINDS = tuple(k for k in VALID_KINDS if k != "feedforward")


@dataclass
class ModelSpec:
    kind: str = "lstm"
    hidden: int = 32
    mogrifier_rounds: int = 4
    swin_window: int = 2

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; "
                              f"valid kinds: {', '.join(VALID_KINDS)}")
        if self.hidden < 1:
            raise ConfigError(f"hidden width must be >= 1, got {self.hidden}")
        if self.mogrifier_rounds < 0:
            raise ConfigError(f"mogrifier rounds must be >= 0, got {self.mogrifier_rounds}")
        if self.swin_window < 1:
            raise ConfigError(f"swin window must be >= 1, got {self.swin_window}")

    @property
    def output_width(self) -> int:
        return 2 * self.hidden if self.kind == "bilstm" else self.hidden


def zero_state(batch: int, hidden: int) -> Tensor:
    return Tensor(np.zeros((batch, hidden)))


def _check_widths(x: Tensor, h: Tensor, w: Tensor, gate: str) -> None:
    if h.shape[0] != x.shape[0]:
        raise ShapeError(f"batch mismatch: state {h.shape} vs input {x.shape}")
    if h.shape[1] + x.shape[1] != w.shape[0]:
        raise ShapeError(f"{gate} weights {w.shape} do not fit "
                         f"[h,x] width {h.shape[1] + x.shape[1]}")


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              params: Mapping[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Standard gated update: input/forget/output gates plus tanh candidate."""
    _check_widths(x, h_prev, params["w_i"], "input-gate")
    cat = nm.concat([h_prev, x], axis=1)
    i = nm.sigmoid(nm.add(nm.matmul(cat, params["w_i"]), params["b_i"]))
    f = nm.sigmoid(nm.add(nm.matmul(cat, params["w_f"]), params["b_f"]))
    o = nm.sigmoid(nm.add(nm.matmul(cat, params["w_o"]), params["b_o"]))
    c_tilde = nm.tanh(nm.add(nm.matmul(cat, params["w_c"]), params["b_c"]))
    c = nm.add(nm.mul(f, c_prev), nm.mul(i, c_tilde))
    h = nm.mul(o, nm.tanh(c))
    return h, c


def gru_cell(x: Tensor, h_prev: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Update/reset gated state: h = (1-z)*h_prev + z*h_tilde."""
    _check_widths(x, h_prev, params["w_z"], "update-gate")
    cat = nm.concat([h_prev, x], axis=1)
    z = nm.sigmoid(nm.add(nm.matmul(cat, params["w_z"]), params["b_z"]))
    r = nm.sigmoid(nm.add(nm.matmul(cat, params["w_r"]), params["b_r"]))
    cat_r = nm.concat([nm.mul(r, h_prev), x], axis=1)
    h_tilde = nm.tanh(nm.add(nm.matmul(cat_r, params["w_h"]), params["b_h"]))
    return nm.add(nm.mul(nm.sub(1.0, z), h_prev), nm.mul(z, h_tilde))


def mogrifier_lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor,
                        params: Mapping[str, Tensor],
                        rounds: int) -> tuple[Tensor, Tensor]:
    """Mutually gate x and h for `rounds` alternating steps, then LSTM.

    Odd rounds rescale x by 2*sigmoid(h @ q); even rounds rescale h by
    2*sigmoid(x @ r). rounds=0 runs the plain LSTM on the untouched pair.
    """
    if rounds < 0:
        raise ContractError(f"rounds must be >= 0, got {rounds}")
    for k in range(1, rounds + 1):
        if k % 2:
            x = nm.mul(nm.mul(2.0, nm.sigmoid(nm.matmul(h_prev, params["q"]))), x)
        else:
            h_prev = nm.mul(nm.mul(2.0, nm.sigmoid(nm.matmul(x, params["r"]))), h_prev)
    return lstm_cell(x, h_prev, c_prev, params)


def stlstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, m_prev: Tensor,
                params: Mapping[str, Tensor]) -> tuple[Tensor, Tensor, Tensor]:
    """Dual-memory update: a second cell state M with its own gates.

    The M path is driven by [x, M_prev]; the hidden output mixes both
    memories through w_mix before the output gate's tanh.
    """
    _check_widths(x, h_prev, params["w_i"], "input-gate")
    cat = nm.concat([h_prev, x], axis=1)
    i = nm.sigmoid(nm.add(nm.matmul(cat, params["w_i"]), params["b_i"]))
    f = nm.sigmoid(nm.add(nm.matmul(cat, params["w_f"]), params["b_f"]))
    o = nm.sigmoid(nm.add(nm.matmul(cat, params["w_o"]), params["b_o"]))
    c_tilde = nm.tanh(nm.add(nm.matmul(cat, params["w_c"]), params["b_c"]))
    c = nm.add(nm.mul(f, c_prev), nm.mul(i, c_tilde))

    cat_m = nm.concat([x, m_prev], axis=1)
    i_m = nm.sigmoid(nm.add(nm.matmul(cat_m, params["w_mi"]), params["b_mi"]))
    f_m = nm.sigmoid(nm.add(nm.matmul(cat_m, params["w_mf"]), params["b_mf"]))
    m_tilde = nm.tanh(nm.add(nm.matmul(cat_m, params["w_mc"]), params["b_mc"]))
    m = nm.add(nm.mul(f_m, m_prev), nm.mul(i_m, m_tilde))

    mixed = nm.matmul(nm.concat([c, m], axis=1), params["w_mix"])
    h = nm.mul(o, nm.tanh(mixed))
    return h, c, m


def _window_attention(u: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Self-attention among the scalar entries of one window (B, w)."""
    q = nm.mul(u, params["wq"])
    k = nm.mul(u, params["wk"])
    v = nm.mul(u, params["wv"])
    cols = []
    for i in range(u.shape[1]):
        alpha = nm.softmax(nm.mul(q[:, i:i + 1], k), axis=-1)
        cols.append(nm.sum_(nm.mul(alpha, v), axis=1, keepdims=True))
    return nm.concat(cols, axis=1)


def swinlstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor,
                  params: Mapping[str, Tensor],
                  window: int) -> tuple[Tensor, Tensor]:
    """Windowed self-attention over the step features, then an LSTM step.

    The feature row is zero-padded to a multiple of `window`, attention is
    applied independently inside each window with a residual connection,
    window outputs are averaged elementwise, and the pooled (B, window)
    row feeds the gated update.
    """
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    feat = x.shape[1]
    pad = (-feat) % window
    if pad:
        x = nm.concat([x, Tensor(np.zeros((x.shape[0], pad)))], axis=1)
    n_windows = x.shape[1] // window
    pooled = None
    for g in range(n_windows):
        u = x[:, g * window:(g + 1) * window]
        out = nm.add(u, nm.mul(_window_attention(u, params), params["wp"]))
        pooled = out if pooled is None else nm.add(pooled, out)
    pooled = nm.mul(pooled, 1.0 / n_windows)
    return lstm_cell(pooled, h_prev, c_prev, params)


def bilstm_forward(xs: Sequence[Tensor], params_fwd: Mapping[str, Tensor],
                   params_bwd: Mapping[str, Tensor]) -> Tensor:
    """Concatenation of the forward and backward final hidden states."""
    if not xs:
        raise ContractError("bilstm needs at least one step input")
    batch = xs[0].shape[0]
    hidden = params_fwd["w_i"].shape[1]
    h, c = zero_state(batch, hidden), zero_state(batch, hidden)
    for x in xs:
        h, c = lstm_cell(x, h, c, params_fwd)
    hb, cb = zero_state(batch, hidden), zero_state(batch, hidden)
    for x in reversed(xs):
        hb, cb = lstm_cell(x, hb, cb, params_bwd)
    return nm.concat([h, hb], axis=1)


def feedforward_net(x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Two hidden ReLU layers down to a single logit column."""
    if x.shape[1] != params["w1"].shape[0]:
        raise ShapeError(f"input width {x.shape} does not match first layer "
                         f"{params['w1'].shape}")
    h1 = nm.relu(nm.add(nm.matmul(x, params["w1"]), params["b1"]))
    h2 = nm.relu(nm.add(nm.matmul(h1, params["w2"]), params["b2"]))
    return nm.add(nm.matmul(h2, params["w3"]), params["b3"])


def output_head(z: Tensor, params: Mapping[str, Tensor]) -> tuple[Tensor, np.ndarray]:
    """Sigmoid probability of an upward move; ties at 0.5 label as 1."""
    logit = nm.add(nm.matmul(z, params["w_out"]), params["b_out"])
    p = nm.sigmoid(logit)
    labels = (p.data.reshape(-1) >= 0.5).astype(int)
    return p, labels


def unroll(spec: ModelSpec, params: Mapping[str, Tensor],
           xs: Sequence[Tensor]) -> tuple[list[Tensor], Tensor]:
    """Run a recurrent model over step inputs.

    Returns the per-step feature rows (for attention pooling) and the
    model's final output row. For bilstm the per-step features pair the
    forward state with the co-located backward state, and the final output
    concatenates both directions' final states.
    """
    if spec.kind not in RECURRENT_KINDS:
        raise ConfigError(f"cannot unroll non-recurrent kind {spec.kind!r}")
    if not xs:
        raise ContractError("empty step-input sequence")
    batch = xs[0].shape[0]
    hidden = spec.hidden
    if spec.kind == "bilstm":
        fwd = {k[4:]: v for k, v in params.items() if k.startswith("fwd.")}
        bwd = {k[4:]: v for k, v in params.items() if k.startswith("bwd.")}
        h, c = zero_state(batch, hidden), zero_state(batch, hidden)
        fwd_states = []
        for x in xs:
            h, c = lstm_cell(x, h, c, fwd)
            fwd_states.append(h)
        hb, cb = zero_state(batch, hidden), zero_state(batch, hidden)
        bwd_states = []
        for x in reversed(xs):
            hb, cb = lstm_cell(x, hb, cb, bwd)
            bwd_states.append(hb)
        bwd_states.reverse()
        steps = [nm.concat([f, b], axis=1) for f, b in zip(fwd_states, bwd_states)]
        final = nm.concat([fwd_states[-1], bwd_states[0]], axis=1)
        return steps, final

    h, c = zero_state(batch, hidden), zero_state(batch, hidden)
    m = zero_state(batch, hidden)
    steps = []
    for x in xs:
        if spec.kind == "lstm":
            h, c = lstm_cell(x, h, c, params)
        elif spec.kind == "gru":
            h = gru_cell(x, h, params)
        elif spec.kind == "mogrifier":
            h, c = mogrifier_lstm_cell(x, h, c, params, spec.mogrifier_rounds)
        elif spec.kind == "stlstm":
            h, c, m = stlstm_cell(x, h, c, m, params)
        elif spec.kind == "swinlstm":
            h, c = swinlstm_cell(x, h, c, params, spec.swin_window)
        steps.append(h)
    return steps, h


def _add_lstm_gates(store: ParameterStore, prefix: str, input_width: int,
                    hidden: int, rng: np.random.Generator) -> None:
    rows = hidden + input_width
    for gate in ("w_i", "w_f", "w_c", "w_o"):
        store.add(f"{prefix}.{gate}", nm.uniform_init(rng, rows, (rows, hidden)))
        store.add(f"{prefix}.{gate.replace('w', 'b')}", np.zeros((1, hidden)))


def add_model_params(store: ParameterStore, spec: ModelSpec, input_width: int,
                     rng: np.random.Generator, prefix: str = "cell") -> None:
    """Create the parameters for one predictor, in a fixed draw order.

    Variant-specific extras are drawn after the shared gate block so that
    a mogrifier with zero rounds consumes exactly the same random stream
    as a plain LSTM.
    """
    hidden = spec.hidden
    kind = spec.kind
    if kind == "lstm":
        _add_lstm_gates(store, prefix, input_width, hidden, rng)
    elif kind == "bilstm":
        _add_lstm_gates(store, f"{prefix}.fwd", input_width, hidden, rng)
        _add_lstm_gates(store, f"{prefix}.bwd", input_width, hidden, rng)
    elif kind == "gru":
        rows = hidden + input_width
        for gate in ("w_z", "w_r", "w_h"):
            store.add(f"{prefix}.{gate}", nm.uniform_init(rng, rows, (rows, hidden)))
            store.add(f"{prefix}.{gate.replace('w', 'b')}", np.zeros((1, hidden)))
    elif kind == "mogrifier":
        _add_lstm_gates(store, prefix, input_width, hidden, rng)
        if spec.mogrifier_rounds >= 1:
            store.add(f"{prefix}.q", nm.uniform_init(rng, hidden, (hidden, input_width)))
        if spec.mogrifier_rounds >= 2:
            store.add(f"{prefix}.r", nm.uniform_init(rng, input_width, (input_width, hidden)))
    elif kind == "stlstm":
        _add_lstm_gates(store, prefix, input_width, hidden, rng)
        rows_m = input_width + hidden
        for gate in ("w_mi", "w_mf", "w_mc"):
            store.add(f"{prefix}.{gate}", nm.uniform_init(rng, rows_m, (rows_m, hidden)))
            store.add(f"{prefix}.{gate.replace('w', 'b')}", np.zeros((1, hidden)))
        store.add(f"{prefix}.w_mix", nm.uniform_init(rng, 2 * hidden, (2 * hidden, hidden)))
    elif kind == "swinlstm":
        for name in ("wq", "wk", "wv", "wp"):
            store.add(f"{prefix}.{name}", nm.uniform_init(rng, 1, (1, 1)))
        _add_lstm_gates(store, prefix, spec.swin_window, hidden, rng)
    elif kind == "feedforward":
        h1 = max(2 * hidden, 4)
        h2 = hidden
        store.add(f"{prefix}.w1", nm.uniform_init(rng, input_width, (input_width, h1)))
        store.add(f"{prefix}.b1", np.zeros((1, h1)))
        store.add(f"{prefix}.w2", nm.uniform_init(rng, h1, (h1, h2)))
        store.add(f"{prefix}.b2", np.zeros((1, h2)))
        store.add(f"{prefix}.w3", nm.uniform_init(rng, h2, (h2, 1)))
        store.add(f"{prefix}.b3", np.zeros((1, 1)))


def add_head_params(store: ParameterStore, width: int,
                    rng: np.random.Generator, prefix: str = "head") -> None:
    store.add(f"{prefix}.w_out", nm.uniform_init(rng, width, (width, 1)))
    store.add(f"{prefix}.b_out", np.zeros((1, 1)))
