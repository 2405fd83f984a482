"""Post-training analyses: Beta fits of per-component class probabilities,
angle to the generating classifier, accuracy metrics, and the spectrum of the
stacked per-domain heads."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datagen import MultiDomainDataset
from .errors import DegenerateFitError
from .linalg import svd
from .model import (CsdParams, _common_logits, _feature_forward, _mixing,
                    dataset_arrays, domain_head)

PROB_CLAMP = 1e-6  # scores are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] before fitting


@dataclass(frozen=True)
class BetaFit:
    """Method-of-moments Beta fit; matches the first two sample moments
    exactly."""

    alpha: float
    beta: float
    n: int
    mean: float
    variance: float


def beta_fit_moments(samples) -> BetaFit:
    """Fit Beta(alpha, beta) by moments to samples from (0, 1).

    With mean mu and (population) variance v, the common factor is
    ``t = mu (1 - mu) / v - 1`` and ``alpha = mu t``, ``beta = (1 - mu) t``.
    Raises :class:`DegenerateFitError` when the variance vanishes or ``t``
    is not positive (moments outside the Beta family).
    """
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size < 2:
        raise DegenerateFitError(f"need at least 2 samples, got {s.size}")
    if not np.all(np.isfinite(s)):
        raise DegenerateFitError("samples contain non-finite values")
    s = np.clip(s, PROB_CLAMP, 1.0 - PROB_CLAMP)
    mu = float(s.mean())
    v = float(s.var())
    if v <= 0.0:
        raise DegenerateFitError("sample variance is zero")
    t = mu * (1.0 - mu) / v - 1.0
    if t <= 0.0:
        raise DegenerateFitError(
            f"moments outside the Beta family (mu={mu:.6g}, var={v:.6g})"
        )
    return BetaFit(alpha=mu * t, beta=(1.0 - mu) * t, n=int(s.size),
                   mean=mu, variance=v)


def beta_mode(fit: BetaFit) -> tuple[float, bool]:
    """(mode, at_boundary). Interior mode requires alpha, beta > 1; otherwise
    the dominating boundary (0 or 1) is reported with the flag set."""
    if fit.alpha > 1.0 and fit.beta > 1.0:
        return (fit.alpha - 1.0) / (fit.alpha + fit.beta - 2.0), False
    return (0.0 if fit.alpha <= fit.beta else 1.0), True


@dataclass(frozen=True)
class DomainComponentFit:
    domain_id: int
    common: BetaFit | None
    specific: BetaFit | None
    common_error: str | None = None
    specific_error: str | None = None


@dataclass(frozen=True)
class ComponentReport:
    """Per-training-domain Beta fits of correct-class probability under the
    common-only and specific-only heads."""

    records: tuple[DomainComponentFit, ...]

    def specific_mode_order(self) -> list[int]:
        """Domain ids sorted by specific-side mode (fitted domains only)."""
        pairs = [
            (beta_mode(r.specific)[0], r.domain_id)
            for r in self.records if r.specific is not None
        ]
        return [d for _, d in sorted(pairs)]


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def component_scores(params: CsdParams, dataset: MultiDomainDataset,
                     include_specific: bool = True) -> ComponentReport:
    """Beta fits of correct-class probabilities, one record per train domain.

    Common-only scores use logits ``w_c . G(x)``; specific-only scores use
    logits ``(w_s . sigmoid(gamma_i)) . G(x)`` with no common term. Fit
    failures are recorded per domain rather than raised.
    """
    if include_specific and params.k < 1:
        raise ValueError("specific-side scores require k >= 1")
    train_domains = dataset.split("train")
    if len(train_domains) != params.n_domains:
        raise ValueError("dataset train split does not match params domains")
    mix = _mixing(params.gamma_raw, params.gamma_activation)
    records = []
    for i, dom in enumerate(train_domains):
        feats, _ = _feature_forward(params.feature_map, dom.x)
        y01 = ((dom.y + 1) // 2).astype(np.int64)
        rows = np.arange(y01.size)
        common_p = _softmax_rows(feats @ params.w_c.T)[rows, y01]
        common_fit, common_err = _try_fit(common_p)
        specific_fit = None
        specific_err = None
        if include_specific:
            head = np.einsum("cmj,j->cm", params.w_s, mix[i])
            specific_p = _softmax_rows(feats @ head.T)[rows, y01]
            specific_fit, specific_err = _try_fit(specific_p)
        records.append(DomainComponentFit(
            domain_id=dom.spec.id,
            common=common_fit,
            specific=specific_fit,
            common_error=common_err,
            specific_error=specific_err,
        ))
    return ComponentReport(records=tuple(records))


def _try_fit(samples):
    try:
        return beta_fit_moments(samples), None
    except DegenerateFitError as exc:
        return None, str(exc)


def angle_to_truth(w, w_star) -> float:
    """Sign-invariant angle between two directions, in degrees."""
    w = np.asarray(w, dtype=np.float64).ravel()
    w_star = np.asarray(w_star, dtype=np.float64).ravel()
    if w.size != w_star.size:
        raise ValueError("vectors must have the same length")
    nw = np.linalg.norm(w)
    ns = np.linalg.norm(w_star)
    if nw == 0.0 or ns == 0.0:
        raise ValueError("angle to a zero vector is undefined")
    cos = abs(float(w @ w_star)) / (nw * ns)
    return math.degrees(math.acos(min(cos, 1.0)))


def accuracy(params: CsdParams, dataset: MultiDomainDataset, split: str,
             head: str = "common") -> float:
    """Fraction correct on a split under the common or per-domain head.

    Per-domain heads exist only for training domains.
    """
    if head not in ("common", "per-domain"):
        raise ValueError(f"unknown head {head!r}")
    x, y01, dom = dataset_arrays(dataset, split)
    if y01.size == 0:
        raise ValueError(f"split {split!r} is empty")
    if head == "common":
        pred = np.argmax(_common_logits(params, x), axis=1)
        return float(np.mean(pred == y01))
    if split != "train":
        raise ValueError("per-domain heads are defined only for training domains")
    correct = 0
    feats, _ = _feature_forward(params.feature_map, x)
    for i in np.unique(dom):
        mask = dom == i
        logits = feats[mask] @ domain_head(params, int(i)).T
        correct += int(np.sum(np.argmax(logits, axis=1) == y01[mask]))
    return correct / y01.size


def stacked_head_spectrum(params: CsdParams) -> np.ndarray:
    """Singular values of the (d x c*m) matrix of flattened per-domain heads.

    By construction its numerical rank is at most k + 1.
    """
    heads = np.stack(
        [domain_head(params, i).ravel() for i in range(params.n_domains)]
    )
    return svd(heads).sigma


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j)
        i = j + 1
    return ranks


def spearman_rank_correlation(a, b) -> float:
    """Spearman correlation (average ranks for ties)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size or a.size < 2:
        raise ValueError("need two same-length sequences of at least 2 values")
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.linalg.norm(ra) * np.linalg.norm(rb)
    if denom == 0.0:
        raise ValueError("rank correlation undefined for constant input")
    return float(ra @ rb / denom)
