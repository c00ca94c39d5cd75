"""Sliding-window LSTM forecaster for one intent axis.

A window of ``r`` past samples is run through a single LSTM layer; the last
hidden state goes through dense(ReLU) -> dense -> scalar, which estimates
the sample ``m`` steps after the window's last element.

Gate weights ``w1..w4`` act on ``[x, h_prev, 1]`` (input, previous hidden
state, bias) and produce the candidate, input gate, forget gate and output
gate in that order.  Inputs and targets go through a fixed affine
normalisation ``(x - input_offset) / input_scale`` stored with the model.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

GATE_NAMES = ("w1", "w2", "w3", "w4")
PARAM_NAMES = GATE_NAMES + ("dense1_w", "dense1_b", "dense2_w", "dense2_b", "out_w", "out_b")
DENSE = 10


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


# -- windows -----------------------------------------------------------------

@dataclass(frozen=True)
class WindowDataset:
    windows: np.ndarray       # (n, r)
    targets: np.ndarray       # (n,)
    end_index: np.ndarray     # (n,) index of each window's last element
    r: int = 20
    m: int = 10
    period_s: float = 0.06

    def __len__(self) -> int:
        return self.targets.size


def make_windows(signal, r: int = 20, m: int = 10, period_s: float = 0.06) -> WindowDataset:
    """Every window of ``r`` consecutive samples that has a target ``m``
    samples after its last element."""
    x = np.asarray(signal, dtype=float).reshape(-1)
    if r < 1 or m < 1:
        raise ValueError("r and m must be positive")
    if x.size < r + m:
        raise ValueError(f"series of length {x.size} is shorter than r + m = {r + m}")
    n = x.size - r - m + 1
    idx = np.arange(n)[:, None] + np.arange(r)[None, :]
    end = np.arange(n) + r - 1
    return WindowDataset(x[idx], x[end + m], end, r, m, period_s)


# -- parameters --------------------------------------------------------------

@dataclass
class LstmParams:
    w1: np.ndarray            # (h + 2, h) candidate
    w2: np.ndarray            # input gate
    w3: np.ndarray            # forget gate
    w4: np.ndarray            # output gate
    dense1_w: np.ndarray      # (h, 10)
    dense1_b: np.ndarray      # (10,)
    dense2_w: np.ndarray      # (10, 10)
    dense2_b: np.ndarray
    out_w: np.ndarray         # (10, 1)
    out_b: np.ndarray         # (1,)
    r: int = 20
    m: int = 10
    period_s: float = 0.06
    input_offset: float = 0.0
    input_scale: float = 1.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.array(getattr(self, name), dtype=float))
        self.validate()

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[1]

    def validate(self) -> None:
        h = self.hidden_size
        d = self.dense1_w.shape[1]
        shapes = {"w1": (h + 2, h), "w2": (h + 2, h), "w3": (h + 2, h), "w4": (h + 2, h),
                  "dense1_w": (h, d), "dense1_b": (d,), "dense2_w": (d, d), "dense2_b": (d,),
                  "out_w": (d, 1), "out_b": (1,)}
        for name, shp in shapes.items():
            a = getattr(self, name)
            if a.shape != shp:
                raise ValueError(f"{name} has shape {a.shape}, expected {shp}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
        if not self.input_scale > 0:
            raise ValueError("input_scale must be positive")

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "LstmParams":
        return replace(self, **{k: v.copy() for k, v in self.arrays().items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, k).ravel() for k in PARAM_NAMES])

    def with_flat(self, v) -> "LstmParams":
        v = np.asarray(v, dtype=float)
        out, i = {}, 0
        for k in PARAM_NAMES:
            a = getattr(self, k)
            out[k] = v[i:i + a.size].reshape(a.shape).copy()
            i += a.size
        return replace(self, **out)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k).tolist() for k in PARAM_NAMES}
        d.update({f"{k}_shape": list(getattr(self, k).shape) for k in PARAM_NAMES})
        d.update(hidden_size=self.hidden_size, r=self.r, m=self.m, period_s=self.period_s,
                 input_offset=self.input_offset, input_scale=self.input_scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LstmParams":
        try:
            arrays = {}
            for k in PARAM_NAMES:
                a = np.asarray(d[k], dtype=float)
                if f"{k}_shape" in d:
                    a = a.reshape(d[f"{k}_shape"])
                arrays[k] = a
            p = cls(**arrays, r=int(d["r"]), m=int(d["m"]), period_s=float(d["period_s"]),
                    input_offset=float(d.get("input_offset", 0.0)),
                    input_scale=float(d.get("input_scale", 1.0)))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed model file: {exc!r}") from exc
        if int(d["hidden_size"]) != p.hidden_size:
            raise ValueError("hidden_size does not match the gate weights")
        return p

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "LstmParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_params(hidden_size: int = 20, r: int = 20, m: int = 10, period_s: float = 0.06,
                seed: int | None = 0, dense: int = DENSE) -> LstmParams:
    """Glorot-uniform weights, zero biases except a forget-gate bias of 1."""
    rng = np.random.default_rng(seed)
    h = hidden_size

    def glorot(n_in, n_out):
        lim = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-lim, lim, (n_in, n_out))

    gates = []
    for g in range(4):
        W = np.zeros((h + 2, h))
        W[:h + 1] = glorot(h + 1, h)
        gates.append(W)
    gates[2][-1] = 1.0
    return LstmParams(*gates, glorot(h, dense), np.zeros(dense), glorot(dense, dense),
                      np.zeros(dense), glorot(dense, 1), np.zeros(1), r=r, m=m, period_s=period_s)


def zero_params(hidden_size: int = 20, r: int = 20, m: int = 10, period_s: float = 0.06) -> LstmParams:
    h = hidden_size
    z = np.zeros
    return LstmParams(z((h + 2, h)), z((h + 2, h)), z((h + 2, h)), z((h + 2, h)),
                      z((h, DENSE)), z(DENSE), z((DENSE, DENSE)), z(DENSE), z((DENSE, 1)), z(1),
                      r=r, m=m, period_s=period_s)


# -- forward / backward --------------------------------------------------------

def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


@dataclass
class ForwardCache:
    x: list = field(default_factory=list)        # normalised input per step, (B, 1)
    h_prev: list = field(default_factory=list)
    xc: list = field(default_factory=list)
    gates: list = field(default_factory=list)    # [i | f | o] per step, (B, 3h)
    c: list = field(default_factory=list)        # c[0] is the initial zero state
    hc: list = field(default_factory=list)       # tanh(c_t)
    h_last: np.ndarray | None = None
    a1: np.ndarray | None = None
    r1: np.ndarray | None = None
    a2: np.ndarray | None = None


def _stacked_gates(params: LstmParams) -> np.ndarray:
    return np.concatenate([params.w1, params.w2, params.w3, params.w4], axis=1)


def forward(params: LstmParams, X, debug: bool = False):
    """Normalised predictions for a batch of windows ``X`` (``(B, r)``, in
    signal units).  Returns ``(y_hat, cache)`` with ``y_hat`` of shape (B,)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.r:
        raise ValueError(f"windows must be (batch, {params.r}), got {X.shape}")
    Xn = (X - params.input_offset) / params.input_scale
    B, h = X.shape[0], params.hidden_size
    W = _stacked_gates(params)
    Wx, Wh, Wb = W[0], W[1:h + 1], W[h + 1]
    hs = np.zeros((B, h))
    c = np.zeros((B, h))
    cache = ForwardCache(c=[c])
    for t in range(params.r):
        x = Xn[:, t:t + 1]
        a = x * Wx + hs @ Wh + Wb
        xc = np.tanh(a[:, :h])
        g = _sigmoid(a[:, h:])
        if debug:
            # saturated gates may round to exactly 0 or 1 in double precision
            assert np.all((g >= 0) & (g <= 1)), "gate output left [0, 1]"
            assert np.all(np.abs(xc) <= 1), "candidate left [-1, 1]"
        c = g[:, :h] * xc + g[:, h:2 * h] * c
        hc = np.tanh(c)
        cache.x.append(x)
        cache.h_prev.append(hs)
        hs = g[:, 2 * h:] * hc
        cache.xc.append(xc)
        cache.gates.append(g)
        cache.c.append(c)
        cache.hc.append(hc)
    cache.h_last = hs
    cache.a1 = hs @ params.dense1_w + params.dense1_b
    cache.r1 = np.maximum(cache.a1, 0.0)
    cache.a2 = cache.r1 @ params.dense2_w + params.dense2_b
    y = (cache.a2 @ params.out_w)[:, 0] + params.out_b[0]
    return y, cache


def lstm_forward(params: LstmParams, window, debug: bool = False):
    """Prediction (signal units) for one window, plus the forward cache."""
    y, cache = forward(params, np.asarray(window, dtype=float).reshape(1, -1), debug)
    return float(y[0] * params.input_scale + params.input_offset), cache


def backward(params: LstmParams, cache: ForwardCache, dy) -> dict:
    """Gradients of ``sum(dy * y_hat)`` with respect to every parameter."""
    dy = np.asarray(dy, dtype=float).reshape(-1, 1)
    h = params.hidden_size
    g = {"out_w": cache.a2.T @ dy, "out_b": dy.sum(axis=0)}
    da2 = dy @ params.out_w.T
    g["dense2_w"] = cache.r1.T @ da2
    g["dense2_b"] = da2.sum(axis=0)
    da1 = (da2 @ params.dense2_w.T) * (cache.a1 > 0)
    g["dense1_w"] = cache.h_last.T @ da1
    g["dense1_b"] = da1.sum(axis=0)
    dh = da1 @ params.dense1_w.T

    WhT = _stacked_gates(params)[1:h + 1].T
    dW = np.zeros((h + 2, 4 * h))
    dc = np.zeros_like(dh)
    da = np.empty((dh.shape[0], 4 * h))
    for t in range(params.r - 1, -1, -1):
        xc, gt, hc = cache.xc[t], cache.gates[t], cache.hc[t]
        i, f, o = gt[:, :h], gt[:, h:2 * h], gt[:, 2 * h:]
        dc = dc + dh * o * (1.0 - hc * hc)
        da[:, :h] = dc * i * (1.0 - xc * xc)
        da[:, h:2 * h] = dc * xc * i * (1.0 - i)
        da[:, 2 * h:3 * h] = dc * cache.c[t] * f * (1.0 - f)
        da[:, 3 * h:] = dh * hc * o * (1.0 - o)
        dW[0] += cache.x[t][:, 0] @ da
        dW[1:h + 1] += cache.h_prev[t].T @ da
        dW[h + 1] += da.sum(axis=0)
        dh = da @ WhT
        dc = dc * f
    for k, name in enumerate(GATE_NAMES):
        g[name] = dW[:, k * h:(k + 1) * h].copy()
    return g


def loss_and_grad(params: LstmParams, X, y) -> tuple[float, dict]:
    """Mean squared error in normalised units and its gradient."""
    y_hat, cache = forward(params, X)
    yn = (np.asarray(y, dtype=float).reshape(-1) - params.input_offset) / params.input_scale
    err = y_hat - yn
    loss = float(np.mean(err * err))
    return loss, backward(params, cache, 2.0 * err / err.size)


def loss_only(params: LstmParams, X, y) -> float:
    y_hat, _ = forward(params, X)
    yn = (np.asarray(y, dtype=float).reshape(-1) - params.input_offset) / params.input_scale
    return float(np.mean((y_hat - yn) ** 2))


def mse(params: LstmParams, X, y) -> float:
    """Mean squared error in signal units."""
    return loss_only(params, X, y) * params.input_scale ** 2


def _head_loss(params: LstmParams, h_last, yn) -> float:
    a1 = h_last @ params.dense1_w + params.dense1_b
    a2 = np.maximum(a1, 0.0) @ params.dense2_w + params.dense2_b
    y = (a2 @ params.out_w)[:, 0] + params.out_b[0]
    return float(np.mean((y - yn) ** 2))


def _batched_gate_forward(params: LstmParams, Ws, X) -> np.ndarray:
    """Final hidden states for a stack of gate matrices ``Ws`` (``(P, h+2, 4h)``);
    returns ``(P, B, h)``."""
    Xn = (X - params.input_offset) / params.input_scale
    h = params.hidden_size
    P, B = Ws.shape[0], X.shape[0]
    Wx, Wh, Wb = Ws[:, 0:1, :], Ws[:, 1:h + 1, :], Ws[:, h + 1:h + 2, :]
    hs = np.zeros((P, B, h))
    c = np.zeros((P, B, h))
    for t in range(params.r):
        a = Xn[None, :, t:t + 1] * Wx + hs @ Wh + Wb
        gt = _sigmoid(a[..., h:])
        c = gt[..., :h] * np.tanh(a[..., :h]) + gt[..., h:2 * h] * c
        hs = gt[..., 2 * h:] * np.tanh(c)
    return hs


def gradient_check(params: LstmParams, sample, epsilon: float = 1e-5) -> float:
    """Largest relative gap between the analytic gradient and central
    differences, over every parameter.  ``sample`` is ``(windows, targets)``
    or ``(window, target)``."""
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError("epsilon must lie in [1e-7, 1e-4]")
    X, y = sample
    X = np.asarray(X, dtype=float).reshape(-1, params.r)
    y = np.asarray(y, dtype=float).reshape(-1)
    _, g = loss_and_grad(params, X, y)
    yn = (y - params.input_offset) / params.input_scale

    # gate weights: every +/- perturbation evaluated as one stacked batch
    W = _stacked_gates(params)
    P = W.size
    Ws = np.broadcast_to(W, (2 * P, *W.shape)).copy()
    flat = Ws.reshape(2 * P, -1)
    flat[np.arange(P), np.arange(P)] += epsilon
    flat[P + np.arange(P), np.arange(P)] -= epsilon
    h_last = _batched_gate_forward(params, Ws, X)
    losses = np.array([_head_loss(params, hl, yn) for hl in h_last])
    num_W = ((losses[:P] - losses[P:]) / (2 * epsilon)).reshape(W.shape)
    analytic = [np.concatenate([g[k] for k in GATE_NAMES], axis=1).ravel()]
    numeric = [num_W.ravel()]

    # head weights: the recurrent part is unchanged, reuse its output
    _, cache = forward(params, X)
    work = params.copy()
    for k in PARAM_NAMES[4:]:
        a = getattr(work, k).reshape(-1)     # view: edits land in ``work``
        col = []
        for j in range(a.size):
            old = a[j]
            a[j] = old + epsilon
            lp = _head_loss(work, cache.h_last, yn)
            a[j] = old - epsilon
            lm = _head_loss(work, cache.h_last, yn)
            a[j] = old
            col.append((lp - lm) / (2 * epsilon))
        analytic.append(g[k].ravel())
        numeric.append(np.array(col))
    analytic = np.concatenate(analytic)
    numeric = np.concatenate(numeric)
    # partials below 1e-6 are compared absolutely: their finite differences
    # are dominated by round-off in the loss
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


# -- training ------------------------------------------------------------------

OPTIMIZERS = ("gd", "adam")
MAX_HALVINGS = 8


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    epochs: int = 200
    seed: int = 0
    val_fraction: float = 0.2
    batch_size: int | None = None    # None: full batch
    hidden_size: int = 20
    axis: str = "z"
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    # full batch only: reject updates that raise the training loss and retry
    # with half the step
    monotone: bool = True

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.axis not in ("x", "y", "z"):
            raise ValueError("axis must be x, y or z")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass
class TrainResult:
    params: LstmParams
    train_loss: np.ndarray    # per epoch, signal units squared; entry 0 is before training
    val_loss: np.ndarray


def split_series(signal, val_fraction: float):
    """Chronological split: the first part trains, the tail validates."""
    x = np.asarray(signal, dtype=float).reshape(-1)
    k = int(round(x.size * (1.0 - val_fraction)))
    return x[:k], x[k:]


class _Adam:
    def __init__(self, params: LstmParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(getattr(params, k)) for k in PARAM_NAMES}
        self.v = {k: np.zeros_like(getattr(params, k)) for k in PARAM_NAMES}
        self.t = 0

    def step(self, params: LstmParams, g: dict, scale: float = 1.0) -> None:
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1 ** self.t
        b2t = 1.0 - c.beta2 ** self.t
        for k in PARAM_NAMES:
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g[k]
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g[k] * g[k]
            getattr(params, k)[...] -= (c.lr * scale) * (self.m[k] / b1t) / (np.sqrt(self.v[k] / b2t) + 1e-8)

    def state(self):
        return ({k: v.copy() for k, v in self.m.items()}, {k: v.copy() for k, v in self.v.items()}, self.t)

    def restore(self, st) -> None:
        self.m, self.v, self.t = st

    def reset(self) -> None:
        for k in PARAM_NAMES:
            self.m[k][...] = 0.0
            self.v[k][...] = 0.0
        self.t = 0


def train(dataset: WindowDataset, cfg: TrainConfig = TrainConfig(),
          val: WindowDataset | None = None, init: LstmParams | None = None) -> TrainResult:
    """Fit the model with back-propagation through time.

    ``cfg.optimizer`` is ``"adam"`` (default) or ``"gd"`` (plain gradient
    descent).  Mini-batches, when enabled, are drawn in a seeded order each
    epoch.  Losses are full-set MSEs in signal units after each epoch.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    X, y = dataset.windows, dataset.targets
    params = init.copy() if init is not None else init_params(
        cfg.hidden_size, dataset.r, dataset.m, dataset.period_s, cfg.seed)
    if init is None:
        series = np.concatenate([X[0], y])
        params.input_offset = float(np.mean(series))
        params.input_scale = float(np.std(series)) or 1.0
    rng = np.random.default_rng(cfg.seed)
    n = len(dataset)
    full = cfg.batch_size is None or cfg.batch_size >= n
    adam = _Adam(params, cfg) if cfg.optimizer == "adam" else None
    scale2 = params.input_scale ** 2
    has_val = val is not None and len(val) > 0

    def apply(g, scale=1.0):
        if adam is not None:
            adam.step(params, g, scale)
        else:
            for k in PARAM_NAMES:
                getattr(params, k)[...] -= (cfg.lr * scale) * g[k]

    tr_hist, va_hist = [], []
    if has_val:
        va_hist.append(mse(params, val.windows, val.targets))
    if full:
        yn = (y - params.input_offset) / params.input_scale
        loss, g = loss_and_grad(params, X, y)
        scale = 1.0
        for epoch in range(1, cfg.epochs + 1):
            tr_hist.append(loss * scale2)
            if not cfg.monotone:
                apply(g)
                if not _finite(params):
                    raise TrainingDivergedError(epoch, float("nan"))
                loss, g = loss_and_grad(params, X, y)
            else:
                saved = params.copy()
                st = adam.state() if adam is not None else None
                for _ in range(MAX_HALVINGS):
                    apply(g, scale)
                    if _finite(params):
                        y_hat, cache = forward(params, X)
                        err = y_hat - yn
                        new_loss = float(np.mean(err * err))
                    else:
                        new_loss = np.inf
                    if new_loss <= loss:
                        loss, g = new_loss, backward(params, cache, 2.0 * err / err.size)
                        scale = min(1.0, scale * 1.25)
                        break
                    for k in PARAM_NAMES:
                        getattr(params, k)[...] = getattr(saved, k)
                    if adam is not None:
                        adam.restore(st)
                        st = adam.state()
                    scale *= 0.5
                else:
                    # no decrease along this direction: drop the momentum so
                    # the next epoch starts from the plain gradient
                    scale = 1.0
                    if adam is not None:
                        adam.reset()
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            if has_val:
                va_hist.append(mse(params, val.windows, val.targets))
        tr_hist.append(loss * scale2)
    else:
        tr_hist.append(mse(params, X, y))
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(n)
            for s in range(0, n, cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                _, g = loss_and_grad(params, X[idx], y[idx])
                apply(g)
            if not _finite(params):
                raise TrainingDivergedError(epoch, float("nan"))
            tr_hist.append(mse(params, X, y))
            if has_val:
                va_hist.append(mse(params, val.windows, val.targets))
    tr = np.array(tr_hist)
    bad = np.flatnonzero(~np.isfinite(tr))
    if bad.size:
        raise TrainingDivergedError(int(bad[0]), float(tr[bad[0]]))
    return TrainResult(params, tr, np.array(va_hist))


def _finite(params: LstmParams) -> bool:
    return all(np.all(np.isfinite(getattr(params, k))) for k in PARAM_NAMES)


def train_series(signal, cfg: TrainConfig = TrainConfig(), r: int = 20, m: int = 10,
                 period_s: float = 0.06) -> TrainResult:
    tr, va = split_series(signal, cfg.val_fraction)
    val = make_windows(va, r, m, period_s) if va.size >= r + m else None
    return train(make_windows(tr, r, m, period_s), cfg, val)


def train_axes(intent_deg, cfg: TrainConfig = TrainConfig(), axes=("x", "y", "z"),
               r: int = 20, m: int = 10, period_s: float = 0.06) -> dict:
    """One independent model per axis of an ``(N, 3)`` intent signal."""
    intent_deg = np.asarray(intent_deg, dtype=float)
    out = {}
    for a in axes:
        col = "xyz".index(a)
        out[a] = train_series(intent_deg[:, col].copy(), replace(cfg, axis=a), r, m, period_s)
    return out


# -- inference -------------------------------------------------------------------

@dataclass(frozen=True)
class StreamPrediction:
    index: np.ndarray        # sample index of the last observed element
    t_target: np.ndarray     # time the prediction refers to
    value: np.ndarray


def predict_stream(params: LstmParams, signal, t0: float = 0.0) -> StreamPrediction:
    """Predictions for every prefix that holds at least ``r`` samples."""
    x = np.asarray(signal, dtype=float).reshape(-1)
    if x.size < params.r:
        return StreamPrediction(np.zeros(0, int), np.zeros(0), np.zeros(0))
    idx = np.arange(x.size - params.r + 1)[:, None] + np.arange(params.r)[None, :]
    y, _ = forward(params, x[idx])
    last = np.arange(params.r - 1, x.size)
    return StreamPrediction(last, t0 + (last + params.m) * params.period_s,
                            y * params.input_scale + params.input_offset)


class StreamPredictor:
    """Push samples one at a time; returns ``(t_target, value)`` once the
    window is full, ``None`` before."""

    def __init__(self, params: LstmParams, t0: float = 0.0):
        self.params = params
        self.t0 = t0
        self._buf: list[float] = []
        self.n = 0

    def push(self, x: float):
        self._buf.append(float(x))
        if len(self._buf) > self.params.r:
            self._buf.pop(0)
        self.n += 1
        if len(self._buf) < self.params.r:
            return None
        y, _ = lstm_forward(self.params, self._buf)
        return self.t0 + (self.n - 1 + self.params.m) * self.params.period_s, y


def xcorr_lag(signal, reference, max_lag: int) -> int:
    """Lag (samples) at which ``signal`` best lines up with ``reference``.

    Positive: ``signal`` is delayed; negative: it leads.  Both series are
    mean-removed; each lag's correlation is normalised by the overlap.
    """
    s = np.asarray(signal, dtype=float).reshape(-1)
    ref = np.asarray(reference, dtype=float).reshape(-1)
    if s.size != ref.size:
        raise ValueError("signal and reference must have the same length")
    if max_lag >= s.size:
        raise ValueError("max_lag must be shorter than the series")
    s = s - s.mean()
    ref = ref - ref.mean()
    best, best_val = 0, -np.inf
    for L in range(-max_lag, max_lag + 1):
        if L >= 0:
            a, b = s[L:], ref[:s.size - L]
        else:
            a, b = s[:L], ref[-L:]
        v = float(a @ b) / a.size
        if v > best_val:
            best, best_val = L, v
    return best
