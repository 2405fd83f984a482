"""Joint training of a common head plus low-rank domain-specific heads.

The trainable state is a feature map ``G`` (identity or one hidden ReLU
layer), a common softmax head ``w_c`` (c x m), a specific basis ``w_s``
(c x m x k) and raw domain embeddings ``gamma_raw`` (d x k). The head used
for a sample from domain ``i`` is

    w_i = w_c + w_s . sigmoid(gamma_raw[i])

and the training objective is

    l_specific + lam * l_common + kappa * ortho_penalty

where both losses are softmax cross-entropies and the penalty pushes the
stacked per-class matrix ``[w_c[y] | w_s[y]]`` toward orthonormal columns.
In ``erm`` mode the objective is the common cross-entropy alone. Only
``w_c`` (and the feature map) is used at inference time.

Binary datasets with labels in {-1, +1} map to class indices {0, 1}.
Gradients are analytic throughout (including the sigmoid chain into
``gamma_raw`` and the quartic penalty chain); the per-batch hot loop lives
in ``csdlab._kernels``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._kernels import head_loss_grads
from .datagen import MultiDomainDataset
from .errors import DatasetFormatError, FormatVersionError, NumericOverflowError
from .rng import DeterministicRng

CHECKPOINT_FORMAT = "csdlab-ckpt-1"


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable elementwise logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _mixing(gamma_raw: np.ndarray, activation: str) -> np.ndarray:
    if activation == "sigmoid":
        return sigmoid(gamma_raw)
    return np.array(gamma_raw, dtype=np.float64)


def _mixing_grad_chain(g_mix: np.ndarray, mix: np.ndarray,
                       activation: str) -> np.ndarray:
    if activation == "sigmoid":
        return g_mix * mix * (1.0 - mix)
    return g_mix


@dataclass
class FeatureMap:
    """Feature network: identity, or one hidden ReLU layer (weights only).

    The output dimension always equals the head dimension ``m``; the hidden
    variant maps m -> h -> m.
    """

    kind: str = "identity"
    w1: np.ndarray | None = None  # (h, m)
    w2: np.ndarray | None = None  # (m, h)

    def __post_init__(self):
        if self.kind not in ("identity", "one_hidden"):
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        if self.kind == "identity":
            if self.w1 is not None or self.w2 is not None:
                raise ValueError("identity feature map carries no weights")
        else:
            if self.w1 is None or self.w2 is None:
                raise ValueError("one_hidden feature map needs w1 and w2")
            self.w1 = np.asarray(self.w1, dtype=np.float64)
            self.w2 = np.asarray(self.w2, dtype=np.float64)
            if self.w1.shape[0] != self.w2.shape[1]:
                raise ValueError("w1/w2 hidden dimensions disagree")
            if self.w1.shape[1] != self.w2.shape[0]:
                raise ValueError("feature map must preserve the dimension")


def _feature_forward(fm: FeatureMap, x: np.ndarray):
    if fm.kind == "identity":
        return x, None
    pre = x @ fm.w1.T
    hidden = np.maximum(pre, 0.0)
    return hidden @ fm.w2.T, (x, pre, hidden)


def _feature_backward(fm: FeatureMap, cache, g_feats: np.ndarray) -> dict:
    if fm.kind == "identity":
        return {}
    x, pre, hidden = cache
    g_w2 = g_feats.T @ hidden
    g_hidden = g_feats @ fm.w2
    g_hidden[pre <= 0.0] = 0.0
    return {"w1": g_hidden.T @ x, "w2": g_w2}


@dataclass
class CsdParams:
    """Trainable state. Arrays are mutated in place by the optimizer."""

    feature_map: FeatureMap
    w_c: np.ndarray        # (c, m)
    w_s: np.ndarray        # (c, m, k)
    gamma_raw: np.ndarray  # (d, k) pre-activation domain embeddings
    lam: float = 1.0
    kappa: float = 1.0
    gamma_activation: str = "sigmoid"  # "sigmoid" | "identity"

    def __post_init__(self):
        self.w_c = np.ascontiguousarray(self.w_c, dtype=np.float64)
        self.w_s = np.ascontiguousarray(self.w_s, dtype=np.float64)
        self.gamma_raw = np.ascontiguousarray(self.gamma_raw, dtype=np.float64)
        if self.w_c.ndim != 2 or self.w_s.ndim != 3 or self.gamma_raw.ndim != 2:
            raise ValueError("bad parameter ranks")
        if self.w_s.shape[:2] != self.w_c.shape:
            raise ValueError("w_s must be (c, m, k) matching w_c")
        if self.gamma_raw.shape[1] != self.w_s.shape[2]:
            raise ValueError("gamma_raw columns must equal k")
        if self.lam < 0 or self.kappa < 0:
            raise ValueError("lam and kappa must be non-negative")
        if self.gamma_activation not in ("sigmoid", "identity"):
            raise ValueError(f"unknown gamma activation {self.gamma_activation!r}")

    @property
    def c(self) -> int:
        return self.w_c.shape[0]

    @property
    def m(self) -> int:
        return self.w_c.shape[1]

    @property
    def k(self) -> int:
        return self.w_s.shape[2]

    @property
    def n_domains(self) -> int:
        return self.gamma_raw.shape[0]


@dataclass(frozen=True)
class CsdConfig:
    """Head hyperparameters: rank, loss weights and class count."""

    k: int = 1
    lam: float = 1.0
    kappa: float = 1.0
    c: int = 2
    gamma_activation: str = "sigmoid"  # "sigmoid" | "identity"

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if self.lam < 0 or self.kappa < 0:
            raise ValueError("lam and kappa must be non-negative")
        if self.c < 2:
            raise ValueError("need at least two classes")
        if self.gamma_activation not in ("sigmoid", "identity"):
            raise ValueError(f"unknown gamma activation {self.gamma_activation!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    optimizer: str = "sgd"  # "sgd" | "sgd-momentum"
    momentum: float = 0.9
    init_scale: float | None = None  # default 1/sqrt(m)
    hidden_width: int = 0  # 0 = identity feature map
    mode: str = "csd"  # "csd" | "erm"
    use_common_loss: bool = True
    use_specific_loss: bool = True
    use_ortho_reg: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if self.optimizer not in ("sgd", "sgd-momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.mode not in ("csd", "erm"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.hidden_width < 0:
            raise ValueError("hidden_width must be non-negative")


class Batch(NamedTuple):
    x: np.ndarray       # (n, m) inputs
    y: np.ndarray       # (n,) class indices in [0, c)
    domain: np.ndarray  # (n,) training-domain indices in [0, d)


@dataclass(frozen=True)
class Gradients:
    w_c: np.ndarray
    w_s: np.ndarray
    gamma_raw: np.ndarray
    feature: dict = field(default_factory=dict)  # keyed "w1"/"w2" when present


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    loss_specific: float
    loss_common: float
    ortho_penalty: float
    train_accuracy: float
    val_accuracy: float  # nan when there is no validation split


def domain_head(params: CsdParams, i: int) -> np.ndarray:
    """The softmax head ``w_c + w_s . sigmoid(gamma_raw[i])`` for domain i.

    (With ``gamma_activation="identity"`` the raw embedding is used
    unsquashed.)
    """
    if not 0 <= i < params.n_domains:
        raise ValueError(f"domain index {i} out of range [0, {params.n_domains})")
    mix = _mixing(params.gamma_raw, params.gamma_activation)[i]
    return params.w_c + np.einsum("cmj,j->cm", params.w_s, mix)


def ortho_penalty(params: CsdParams) -> float:
    """sum_y |I - W[y]^T W[y]|_F^2 over the stacked heads [w_c[y] | w_s[y]].

    Zero exactly when every class's common column and specific columns form
    an orthonormal set.
    """
    value, _, _ = _ortho_penalty_grad(params.w_c, params.w_s, want_grad=False)
    return value


def _ortho_penalty_grad(w_c: np.ndarray, w_s: np.ndarray, want_grad: bool):
    stacked = np.concatenate([w_c[:, :, None], w_s], axis=2)  # (c, m, k+1)
    gram = np.einsum("ymi,ymj->yij", stacked, stacked)
    err = np.eye(gram.shape[1])[None, :, :] - gram
    value = float(np.sum(err * err))
    if not want_grad:
        return value, None, None
    g_stacked = -4.0 * np.einsum("ymi,yij->ymj", stacked, err)
    return value, g_stacked[:, :, 0], g_stacked[:, :, 1:]


def _coefficients(params: CsdParams, mode: str, use_common: bool,
                  use_specific: bool, use_ortho: bool):
    # Returns multipliers for (l_specific, l_common, penalty). erm mode is the
    # plain common cross-entropy regardless of lam/kappa.
    if mode == "erm":
        return 0.0, 1.0, 0.0
    return (
        1.0 if use_specific else 0.0,
        params.lam if use_common else 0.0,
        params.kappa if use_ortho else 0.0,
    )


def _check_batch(params: CsdParams, batch: Batch):
    x = np.ascontiguousarray(batch.x, dtype=np.float64)
    y = np.ascontiguousarray(batch.y, dtype=np.int64)
    dom = np.ascontiguousarray(batch.domain, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a non-empty (n, m) array")
    if y.shape != (x.shape[0],) or dom.shape != (x.shape[0],):
        raise ValueError("batch arrays must have matching lengths")
    if y.min() < 0 or y.max() >= params.c:
        raise ValueError("class index out of range")
    if dom.min() < 0 or dom.max() >= params.n_domains:
        raise ValueError("domain index out of range")
    return x, y, dom


def _loss_and_grads(params: CsdParams, batch: Batch, mode: str, use_common: bool,
                    use_specific: bool, use_ortho: bool, want_grads: bool):
    x, y, dom = _check_batch(params, batch)
    feats, cache = _feature_forward(params.feature_map, x)
    if not np.all(np.isfinite(feats)):
        raise NumericOverflowError("feature activations are not finite")
    mix = _mixing(params.gamma_raw, params.gamma_activation)
    coef_s, coef_c, coef_r = _coefficients(params, mode, use_common,
                                           use_specific, use_ortho)
    l_s, l_c, g_wc, g_ws, g_mix, g_feat = head_loss_grads(
        feats, y, dom, params.w_c, params.w_s, mix, coef_s, coef_c, want_grads
    )
    r, r_wc, r_ws = _ortho_penalty_grad(params.w_c, params.w_s,
                                        want_grad=want_grads)
    total = coef_s * l_s + coef_c * l_c + coef_r * r
    if not math.isfinite(total):
        raise NumericOverflowError("loss is not finite")
    if not want_grads:
        return total, l_s, l_c, r, None
    g_wc = g_wc + coef_r * r_wc
    g_ws = g_ws + coef_r * r_ws
    g_gamma = _mixing_grad_chain(g_mix, mix, params.gamma_activation)
    grads = Gradients(
        w_c=g_wc,
        w_s=g_ws,
        gamma_raw=g_gamma,
        feature=_feature_backward(params.feature_map, cache, g_feat),
    )
    return total, l_s, l_c, r, grads


def loss(params: CsdParams, batch: Batch, mode: str = "csd",
         use_common: bool = True, use_specific: bool = True,
         use_ortho: bool = True):
    """(total, l_specific, l_common, penalty) on one batch.

    ``total = l_specific + lam * l_common + kappa * penalty`` in csd mode
    (with disabled terms dropped); plain ``l_common`` in erm mode. The
    component values are always reported unweighted.
    """
    total, l_s, l_c, r, _ = _loss_and_grads(
        params, batch, mode, use_common, use_specific, use_ortho, want_grads=False
    )
    return total, l_s, l_c, r


def gradients(params: CsdParams, batch: Batch, mode: str = "csd",
              use_common: bool = True, use_specific: bool = True,
              use_ortho: bool = True) -> Gradients:
    """Analytic gradients of the total loss for every trainable tensor."""
    _, _, _, _, grads = _loss_and_grads(
        params, batch, mode, use_common, use_specific, use_ortho, want_grads=True
    )
    return grads


def predict_common(params: CsdParams, x) -> int:
    """Class index under the common head; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != _input_dim(params):
        raise ValueError(f"x must be a length-{_input_dim(params)} vector")
    feats, _ = _feature_forward(params.feature_map, x[None, :])
    return int(np.argmax(params.w_c @ feats[0]))


def _input_dim(params: CsdParams) -> int:
    if params.feature_map.kind == "identity":
        return params.m
    return params.feature_map.w1.shape[1]


def dataset_arrays(dataset: MultiDomainDataset, split: str):
    """Stacked (x, class_index, domain_index) arrays for one split.

    Domain indices count positions within the split (for the train split this
    matches the gamma_raw row used in training). Labels map -1 -> 0, +1 -> 1.
    """
    doms = dataset.split(split)
    if not doms:
        return (np.zeros((0, dataset.config.m)), np.zeros(0, dtype=np.int64),
                np.zeros(0, dtype=np.int64))
    x = np.vstack([d.x for d in doms])
    y = np.concatenate([(d.y + 1) // 2 for d in doms]).astype(np.int64)
    dom = np.concatenate(
        [np.full(d.y.size, i, dtype=np.int64) for i, d in enumerate(doms)]
    )
    return x, y, dom


def _common_logits(params: CsdParams, x: np.ndarray) -> np.ndarray:
    feats, _ = _feature_forward(params.feature_map, x)
    return feats @ params.w_c.T


def _init_params(rng: DeterministicRng, csd: CsdConfig, m: int, d: int,
                 cfg: TrainConfig) -> CsdParams:
    scale = cfg.init_scale if cfg.init_scale is not None else 1.0 / math.sqrt(m)
    # Fixed draw order (w_c, w_s, feature weights) so all modes sharing a seed
    # start from identical parameters.
    w_c = rng.uniform(-scale, scale, csd.c * m).reshape(csd.c, m)
    w_s = rng.uniform(-scale, scale, csd.c * m * csd.k).reshape(csd.c, m, csd.k)
    if cfg.hidden_width > 0:
        h = cfg.hidden_width
        fm = FeatureMap(
            kind="one_hidden",
            w1=rng.uniform(-scale, scale, h * m).reshape(h, m),
            w2=rng.uniform(-scale, scale, m * h).reshape(m, h),
        )
    else:
        fm = FeatureMap()
    return CsdParams(
        feature_map=fm,
        w_c=w_c,
        w_s=w_s,
        gamma_raw=np.zeros((d, csd.k)),
        lam=csd.lam,
        kappa=csd.kappa,
        gamma_activation=csd.gamma_activation,
    )


def _named_params(params: CsdParams):
    out = [("w_c", params.w_c), ("w_s", params.w_s),
           ("gamma_raw", params.gamma_raw)]
    if params.feature_map.kind == "one_hidden":
        out += [("w1", params.feature_map.w1), ("w2", params.feature_map.w2)]
    return out


def _grad_for(name: str, grads: Gradients):
    if name in ("w_c", "w_s", "gamma_raw"):
        return getattr(grads, name)
    return grads.feature[name]


def train(dataset: MultiDomainDataset, train_config: TrainConfig,
          csd_config: CsdConfig):
    """Mini-batch first-order training on the train split.

    Returns ``(params, history)``; deterministic given the config seed. Epoch
    rows record the full-train-split loss components plus train/val accuracy
    under the common head.
    """
    x_all, y_all, dom_all = dataset_arrays(dataset, "train")
    if x_all.shape[0] == 0:
        raise ValueError("dataset train split is empty")
    x_val, y_val, _ = dataset_arrays(dataset, "val")
    n_domains = len(dataset.split("train"))
    m = dataset.config.m

    rng = DeterministicRng(train_config.seed)
    params = _init_params(rng, csd_config, m, n_domains, train_config)
    toggles = (train_config.use_common_loss, train_config.use_specific_loss,
               train_config.use_ortho_reg)
    velocity = {name: np.zeros_like(arr) for name, arr in _named_params(params)}
    use_momentum = train_config.optimizer == "sgd-momentum"
    lr = train_config.learning_rate

    n = x_all.shape[0]
    history: list[HistoryRow] = []
    for epoch in range(train_config.epochs):
        perm = rng.permutation(n)
        for step, start in enumerate(range(0, n, train_config.batch_size)):
            idx = perm[start:start + train_config.batch_size]
            batch = Batch(x_all[idx], y_all[idx], dom_all[idx])
            try:
                _, _, _, _, grads = _loss_and_grads(
                    params, batch, train_config.mode, *toggles, want_grads=True
                )
            except NumericOverflowError as exc:
                raise NumericOverflowError(str(exc), epoch=epoch, step=step) from exc
            for name, arr in _named_params(params):
                g = _grad_for(name, grads)
                if use_momentum:
                    vel = velocity[name]
                    vel *= train_config.momentum
                    vel += g
                    arr -= lr * vel
                else:
                    arr -= lr * g
                if not np.all(np.isfinite(arr)):
                    raise NumericOverflowError(
                        f"parameter {name} diverged", epoch=epoch, step=step
                    )
        full = Batch(x_all, y_all, dom_all)
        _, l_s, l_c, r, _ = _loss_and_grads(
            params, full, train_config.mode, *toggles, want_grads=False
        )
        train_acc = float(
            np.mean(np.argmax(_common_logits(params, x_all), axis=1) == y_all)
        )
        if y_val.size:
            val_acc = float(
                np.mean(np.argmax(_common_logits(params, x_val), axis=1) == y_val)
            )
        else:
            val_acc = float("nan")
        history.append(HistoryRow(epoch, l_s, l_c, r, train_acc, val_acc))
    return params, history


def save_checkpoint(params: CsdParams, path, meta: dict | None = None) -> None:
    """JSON checkpoint (format ``csdlab-ckpt-1``); round-trips bit-exactly."""
    fm = params.feature_map
    obj = {
        "format": CHECKPOINT_FORMAT,
        "c": params.c,
        "m": params.m,
        "k": params.k,
        "n_domains": params.n_domains,
        "lambda": params.lam,
        "kappa": params.kappa,
        "gamma_activation": params.gamma_activation,
        "feature_map": {
            "kind": fm.kind,
            "w1": None if fm.w1 is None else fm.w1.tolist(),
            "w2": None if fm.w2 is None else fm.w2.tolist(),
        },
        "w_c": params.w_c.tolist(),
        "w_s": params.w_s.tolist(),
        "gamma_raw": params.gamma_raw.tolist(),
        "meta": meta or {},
    }
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp~")
    tmp.write_text(text)
    tmp.replace(target)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(params, meta)``."""
    p = Path(path)
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(
            f"invalid JSON: {exc.msg}", path=str(p), line=exc.lineno
        ) from exc
    if not isinstance(obj, dict) or "format" not in obj:
        raise DatasetFormatError("missing 'format' field", path=str(p))
    if obj["format"] != CHECKPOINT_FORMAT:
        raise FormatVersionError(CHECKPOINT_FORMAT, obj["format"], path=str(p))
    try:
        fm_obj = obj["feature_map"]
        fm = FeatureMap(
            kind=fm_obj["kind"],
            w1=None if fm_obj["w1"] is None else np.asarray(fm_obj["w1"]),
            w2=None if fm_obj["w2"] is None else np.asarray(fm_obj["w2"]),
        )
        shape = (int(obj["c"]), int(obj["m"]), int(obj["k"]))
        params = CsdParams(
            feature_map=fm,
            w_c=np.asarray(obj["w_c"], dtype=np.float64).reshape(shape[:2]),
            w_s=np.asarray(obj["w_s"], dtype=np.float64).reshape(shape),
            gamma_raw=np.asarray(obj["gamma_raw"], dtype=np.float64).reshape(
                int(obj["n_domains"]), shape[2]
            ),
            lam=float(obj["lambda"]),
            kappa=float(obj["kappa"]),
            gamma_activation=str(obj.get("gamma_activation", "sigmoid")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"bad checkpoint contents: {exc}",
                                 path=str(p)) from exc
    return params, obj.get("meta", {})
