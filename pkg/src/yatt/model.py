"""Stacked-LSTM and temporal-attention regressors.

Both kinds share the two-layer encoder. The stacked kind regresses on the
final annotation, the attention kind on the attention context. Maturity
group and genotype cluster ("statics") can be appended to every input
time-step, to the head input after the encoder, or both.
"""
import copy
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import attention
from . import lstm
from .numcore import AdamState, ShapeError, adam_step, glorot_uniform

log = logging.getLogger(__name__)

WEATHER_VARS = ("ADNI", "AP", "ARH", "MDNI", "MaxSur", "MinSur", "AvgSur")
KINDS = ("stacked", "attention")
STATIC_MODES = ("none", "every_step", "after_encoder", "both")


class ConfigError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    kind: str = "stacked"
    encoder: lstm.EncoderConfig = field(default_factory=lstm.EncoderConfig)
    static_mode: str = "both"
    use_weather: bool = True
    use_mg: bool = True
    use_cluster: bool = True
    weather_vars: tuple = WEATHER_VARS
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.001
    seed: int = 0
    max_grad_norm: float | None = None

    def __post_init__(self):
        self.weather_vars = tuple(self.weather_vars)
        if isinstance(self.encoder, dict):
            self.encoder = lstm.EncoderConfig(**self.encoder)

    @property
    def statics(self):
        return tuple(n for n, on in (("mg", self.use_mg), ("cluster", self.use_cluster)) if on)

    @property
    def weather_columns(self):
        if not self.use_weather:
            return ()
        return tuple(WEATHER_VARS.index(v) for v in self.weather_vars)

    @property
    def statics_in_sequence(self):
        return self.static_mode in ("every_step", "both")

    @property
    def statics_after(self):
        return self.static_mode in ("after_encoder", "both")

    @property
    def n_after(self):
        return len(self.statics) if self.statics_after else 0

    def expected_input_dim(self):
        n = len(self.weather_columns)
        if self.statics_in_sequence:
            n += len(self.statics)
        return n

    def head_inputs(self):
        return self.encoder.h2 + self.n_after

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.static_mode not in STATIC_MODES:
            raise ConfigError(f"static_mode must be one of {STATIC_MODES}, got {self.static_mode!r}")
        bad = [v for v in self.weather_vars if v not in WEATHER_VARS]
        if bad or len(set(self.weather_vars)) != len(self.weather_vars):
            raise ConfigError(f"weather_vars must be distinct names from {WEATHER_VARS}, got {self.weather_vars}")
        if self.use_weather and not self.weather_vars:
            raise ConfigError("use_weather is set but weather_vars is empty")
        if self.statics and self.static_mode == "none":
            raise ConfigError("maturity group / cluster enabled but static_mode is 'none'")
        expected = self.expected_input_dim()
        if expected == 0:
            raise ConfigError("configuration feeds nothing into the encoder")
        if self.encoder.input_dim != expected:
            raise ConfigError(
                f"encoder.input_dim={self.encoder.input_dim} but the feature flags give {expected} "
                f"({len(self.weather_columns)} weather + "
                f"{len(self.statics) if self.statics_in_sequence else 0} static per step)"
            )
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ConfigError("epochs, batch_size and learning_rate must be non-negative (batch_size >= 1)")
        return self

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["encoder"] = dict(vars(self.encoder))
        d["weather_vars"] = list(self.weather_vars)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        enc = d.pop("encoder", {})
        if isinstance(enc, dict):
            unknown = set(enc) - set(lstm.EncoderConfig.__dataclass_fields__)
            if unknown:
                raise ConfigError(f"unknown encoder config keys: {sorted(unknown)}")
            enc = lstm.EncoderConfig(**enc)
        return cls(encoder=enc, **d)


def default_config(kind="stacked", **overrides):
    return ModelConfig(kind=kind, **overrides)


def count_params(cfg):
    """Closed-form learnable parameter count for ``cfg``."""
    e = cfg.encoder
    n = 4 * e.h1 * (e.h1 + e.input_dim + 1) + 4 * e.h2 * (e.h2 + e.h1 + 1)
    n += cfg.head_inputs() + 1
    if cfg.kind == "attention":
        n += e.h2 + 1
    return n


@dataclass
class ModelWeights:
    l1: lstm.LstmCellWeights
    l2: lstm.LstmCellWeights
    head_W: np.ndarray
    head_b: np.ndarray
    attn: attention.AttentionParams | None = None

    def tensors(self):
        """Named tensors in checkpoint order (layer 1, layer 2, attention, head)."""
        out = {"l1.W": self.l1.W, "l1.b": self.l1.b, "l2.W": self.l2.W, "l2.b": self.l2.b}
        if self.attn is not None:
            out["attn.d"] = self.attn.d
            out["attn.bias"] = self.attn.bias
        out["head.W"] = self.head_W
        out["head.b"] = self.head_b
        return out

    def n_params(self):
        return sum(t.size for t in self.tensors().values())

    def copy(self):
        return copy.deepcopy(self)


def _shapes(cfg):
    e = cfg.encoder
    shapes = {
        "l1.W": (4 * e.h1, e.h1 + e.input_dim),
        "l1.b": (4 * e.h1,),
        "l2.W": (4 * e.h2, e.h2 + e.h1),
        "l2.b": (4 * e.h2,),
    }
    if cfg.kind == "attention":
        shapes["attn.d"] = (1, e.h2)
        shapes["attn.bias"] = (1,)
    shapes["head.W"] = (1, cfg.head_inputs())
    shapes["head.b"] = (1,)
    return shapes


def from_tensors(cfg, tensors):
    shapes = _shapes(cfg)
    if list(tensors) != list(shapes):
        raise ShapeError(f"tensor names {list(tensors)} do not match config layout {list(shapes)}")
    for k, s in shapes.items():
        if tuple(np.shape(tensors[k])) != s:
            raise ShapeError(f"{k} has shape {np.shape(tensors[k])}, config expects {s}")
    return ModelWeights(
        l1=lstm.LstmCellWeights(tensors["l1.W"], tensors["l1.b"]),
        l2=lstm.LstmCellWeights(tensors["l2.W"], tensors["l2.b"]),
        head_W=np.ascontiguousarray(tensors["head.W"], dtype=np.float64),
        head_b=np.ascontiguousarray(tensors["head.b"], dtype=np.float64),
        attn=attention.AttentionParams(tensors["attn.d"], tensors["attn.bias"]) if cfg.kind == "attention" else None,
    )


def build(cfg, seed=None):
    """Freshly initialised weights for ``cfg``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    e = cfg.encoder
    w = ModelWeights(
        l1=lstm.LstmCellWeights.init(rng, e.input_dim, e.h1),
        l2=lstm.LstmCellWeights.init(rng, e.h1, e.h2),
        attn=attention.AttentionParams.init(rng, e.h2) if cfg.kind == "attention" else None,
        head_W=glorot_uniform(rng, 1, cfg.head_inputs()),
        head_b=np.zeros(1),
    )
    assert w.n_params() == count_params(cfg)
    return w


def assemble(cfg, feats, idx=None):
    """Model inputs ``(sequence, after_statics)`` for (a subset of) prepared features."""
    weather = feats.weather if idx is None else feats.weather[idx]
    N, T = weather.shape[:2]
    if T != cfg.encoder.T_x:
        raise ShapeError(f"features have T_x={T}, model expects {cfg.encoder.T_x}")
    parts = [weather[:, :, list(cfg.weather_columns)]] if cfg.weather_columns else []
    statics = np.empty((N, 0))
    if cfg.statics:
        cols = []
        for name in cfg.statics:
            v = getattr(feats, name)
            cols.append(v if idx is None else v[idx])
        statics = np.stack(cols, axis=1).astype(np.float64)
    if cfg.statics_in_sequence and cfg.statics:
        parts.append(np.broadcast_to(statics[:, None, :], (N, T, statics.shape[1])))
    seq = np.concatenate(parts, axis=2) if len(parts) > 1 else parts[0]
    after = statics if cfg.statics_after else np.empty((N, 0))
    return np.ascontiguousarray(seq, dtype=np.float64), after


def forward(weights, cfg, seq, after=None, mode="infer", seed=None):
    """Predicted scaled yields; returns ``(pred, alphas, cache)``.

    ``alphas`` is ``None`` for the stacked kind.
    """
    seq = np.asarray(seq, dtype=np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    N = seq.shape[0]
    after = np.empty((N, 0)) if after is None else np.asarray(after, dtype=np.float64).reshape(N, -1)
    if after.shape[1] != cfg.n_after:
        raise ShapeError(f"after-encoder statics have width {after.shape[1]}, config expects {cfg.n_after}")
    if seq.shape[2] != cfg.encoder.input_dim:
        raise ShapeError(f"sequence input dim {seq.shape[2]} vs encoder input_dim {cfg.encoder.input_dim}")
    ann, last, enc_cache = lstm.stacked_encode(cfg.encoder, weights.l1, weights.l2, seq, mode, seed)
    alphas = None
    attn_cache = None
    if cfg.kind == "attention":
        summary, alphas, attn_cache = attention.attend(weights.attn, ann)
    else:
        summary = last
    head_in = np.concatenate([summary, after], axis=1)
    pred = head_in @ weights.head_W[0] + weights.head_b[0]
    cache = {"enc": enc_cache, "attn": attn_cache, "head_in": head_in, "ann_shape": ann.shape}
    if single:
        return pred[0], (None if alphas is None else alphas[0]), cache
    return pred, alphas, cache


def backward(weights, cfg, cache, d_pred):
    """Gradients of every tensor (keys as in :meth:`ModelWeights.tensors`)."""
    d_pred = np.atleast_1d(np.asarray(d_pred, dtype=np.float64))
    head_in = cache["head_in"]
    grads = {}
    d_head_in = d_pred[:, None] * weights.head_W[0]
    h2 = cfg.encoder.h2
    d_summary = d_head_in[:, :h2]
    if cfg.kind == "attention":
        ga, d_ann = attention.attend_backward(weights.attn, cache["attn"], d_summary)
    else:
        d_ann = np.zeros(cache["ann_shape"])
        d_ann[:, -1, :] = d_summary
    g1, g2, _ = lstm.bptt_backward(weights.l1, weights.l2, cache["enc"], d_ann)
    grads["l1.W"], grads["l1.b"] = g1["W"], g1["b"]
    grads["l2.W"], grads["l2.b"] = g2["W"], g2["b"]
    if cfg.kind == "attention":
        grads["attn.d"], grads["attn.bias"] = ga["d"], ga["bias"]
    grads["head.W"] = (d_pred @ head_in)[None, :]
    grads["head.b"] = np.array([d_pred.sum()])
    return grads


def loss_and_grads(weights, cfg, seq, after, target, mode="train", seed=None):
    pred, _, cache = forward(weights, cfg, seq, after, mode, seed)
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grads = backward(weights, cfg, cache, 2.0 * diff / diff.size)
    return loss, grads, pred


def predict_scaled(weights, cfg, feats, batch_size=512):
    seq, after = assemble(cfg, feats)
    preds = []
    alphas = []
    for s in range(0, len(seq), batch_size):
        p, a, _ = forward(weights, cfg, seq[s : s + batch_size], after[s : s + batch_size])
        preds.append(p)
        if a is not None:
            alphas.append(a)
    pred = np.concatenate(preds) if preds else np.empty(0)
    return pred, (np.concatenate(alphas) if alphas else None)


def predict(weights, cfg, feats, scaler):
    """Yields in original units (bu/acre) for scaled prepared features."""
    if not feats.scaled:
        raise ValueError("predict: features are not scaled; apply the training scaler first")
    pred, _ = predict_scaled(weights, cfg, feats)
    return scaler.invert_target(pred)


def attention_maps(weights, cfg, feats):
    if cfg.kind != "attention":
        raise ConfigError("attention maps are only produced by the attention kind")
    _, alphas = predict_scaled(weights, cfg, feats)
    return [attention.AttentionMap(a, rid) for a, rid in zip(alphas, feats.record_ids)]


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_epoch: int = -1


def _rmse_original(weights, cfg, feats, scaler):
    pred = predict(weights, cfg, feats, scaler)
    d = pred - feats.yield_bu
    return float(np.sqrt(np.mean(d * d)))


def train(cfg, split, seed=None, initial=None):
    """Mini-batch Adam on scaled MSE; returns ``(best_weights, history)``.

    The returned weights are those with the lowest validation RMSE (original
    units) over all epochs; with an empty validation split the final weights
    are returned.
    """
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    train_f = split.train
    if len(train_f) == 0:
        raise ValueError("train: empty training split")
    weights = build(cfg, seed) if initial is None else initial.copy()
    params = weights.tensors()
    state = AdamState(lr=cfg.learning_rate)
    rng = np.random.default_rng([seed, 1])
    seq, after = assemble(cfg, train_f)
    target = train_f.target
    n = len(seq)
    history = TrainHistory()
    best = weights.copy()
    best_rmse = np.inf
    has_val = split.val is not None and len(split.val) > 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        sse = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            pred, _, cache = forward(weights, cfg, seq[idx], after[idx], "train", rng)
            diff = pred - target[idx]
            loss = float(np.mean(diff * diff))
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch + 1}, batch starting {s}")
            grads = backward(weights, cfg, cache, 2.0 * diff / diff.size)
            sse += loss * len(idx)
            if cfg.max_grad_norm is not None:
                norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                if norm > cfg.max_grad_norm:
                    for g in grads.values():
                        g *= cfg.max_grad_norm / norm
            adam_step(params, grads, state)
        history.train_loss.append(sse / n)
        if has_val:
            v = _rmse_original(weights, cfg, split.val, split.scaler)
            if not np.isfinite(v):
                raise NumericError(f"non-finite validation RMSE at epoch {epoch + 1}")
            history.val_rmse.append(v)
            if v < best_rmse:
                best_rmse = v
                best = weights.copy()
                history.best_epoch = epoch
        history.seconds.append(time.perf_counter() - t0)
        log.debug("epoch %d loss %.6f val %s", epoch + 1, history.train_loss[-1],
                  history.val_rmse[-1] if has_val else "-")
    if not has_val or cfg.epochs == 0:
        best = weights.copy()
        history.best_epoch = cfg.epochs - 1
    return best, history
