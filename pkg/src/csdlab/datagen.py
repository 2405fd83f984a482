"""Seeded synthetic multi-domain data.

Each domain ``i`` draws coefficient vector ``beta_i`` and per-coordinate
noise scales, then samples

    x = y * (e_c + e_s @ beta_i) + noise,   y = +-1 equiprobable,

with coordinate-wise Gaussian noise. Training and validation domains draw
``beta`` from ``[beta_low, beta_high]``; test domains from
``[beta_test_low, beta_test_high]``, which may lie outside the training
range. Everything is driven by :class:`csdlab.rng.DeterministicRng`, so a
dataset is a pure function of its config.

On-disk format (``save_dataset``/``load_dataset``): a directory holding
``metadata.json`` (format tag ``csdlab-ds-1``, full config, domain specs)
plus one ``domain_NNNN.csv`` per domain with header ``y,x0,...``; floats are
written with 17 significant digits so a round-trip is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, FormatVersionError
from .linalg import as_matrix, as_vector, project_onto_span
from .rng import DeterministicRng

DATASET_FORMAT = "csdlab-ds-1"
FLOAT_FMT = "%.17g"

_SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class GeneratorConfig:
    m: int
    k_true: int
    d_train: int
    d_val: int
    d_test: int
    n_per_domain: int
    beta_low: float
    beta_high: float
    beta_test_low: float
    beta_test_high: float
    sigma_low: float
    sigma_high: float
    e_c: np.ndarray
    e_s: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "e_c", as_vector(self.e_c, "e_c"))
        object.__setattr__(self, "e_s", as_matrix(self.e_s, "e_s"))
        for name in ("m", "k_true", "d_train", "d_val", "d_test", "n_per_domain"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.beta_low > self.beta_high:
            raise ValueError("beta_low must not exceed beta_high")
        if self.beta_test_low > self.beta_test_high:
            raise ValueError("beta_test_low must not exceed beta_test_high")
        if not (0.0 <= self.sigma_low <= self.sigma_high):
            raise ValueError("need 0 <= sigma_low <= sigma_high")
        if self.e_c.shape != (self.m,):
            raise ValueError(f"e_c must have length m={self.m}")
        if self.e_s.shape != (self.m, self.k_true):
            raise ValueError(f"e_s must be {self.m} x {self.k_true}")
        if np.linalg.norm(self.e_c) == 0.0:
            raise ValueError("e_c must be nonzero")
        if self.k_true and np.any(np.linalg.norm(self.e_s, axis=0) == 0.0):
            raise ValueError("every e_s column must be nonzero")

    @property
    def n_domains(self) -> int:
        return self.d_train + self.d_val + self.d_test


@dataclass(frozen=True)
class DomainSpec:
    id: int
    split: str
    beta: np.ndarray        # (k_true,)
    sigma_diag: np.ndarray  # (m,) per-coordinate noise std


@dataclass(frozen=True)
class DomainData:
    spec: DomainSpec
    x: np.ndarray  # (n, m)
    y: np.ndarray  # (n,) labels in {-1, +1}


@dataclass(frozen=True)
class MultiDomainDataset:
    config: GeneratorConfig
    domains: tuple[DomainData, ...] = field(default_factory=tuple)

    def split(self, tag: str) -> list[DomainData]:
        if tag not in _SPLITS:
            raise ValueError(f"unknown split {tag!r}")
        return [d for d in self.domains if d.spec.split == tag]


def _split_of(config: GeneratorConfig, index: int) -> str:
    if index < config.d_train:
        return "train"
    if index < config.d_train + config.d_val:
        return "val"
    return "test"


def _draw_specs(rng: DeterministicRng, config: GeneratorConfig) -> list[DomainSpec]:
    specs = []
    for i in range(config.n_domains):
        split = _split_of(config, i)
        if split == "test":
            lo, hi = config.beta_test_low, config.beta_test_high
        else:
            lo, hi = config.beta_low, config.beta_high
        beta = rng.uniform(lo, hi, config.k_true)
        sigma = rng.uniform(config.sigma_low, config.sigma_high, config.m)
        specs.append(DomainSpec(id=i, split=split, beta=beta, sigma_diag=sigma))
    return specs


def sample_domains(config: GeneratorConfig) -> list[DomainSpec]:
    """Domain specs alone (same draws as the prefix of ``generate``)."""
    return _draw_specs(DeterministicRng(config.seed), config)


def generate(config: GeneratorConfig) -> MultiDomainDataset:
    """Sample the full dataset: specs, labels, then features, per domain."""
    rng = DeterministicRng(config.seed)
    specs = _draw_specs(rng, config)
    n = config.n_per_domain
    domains = []
    for spec in specs:
        y = rng.signs(n)
        noise = rng.standard_normal(n * config.m).reshape(n, config.m)
        signal = config.e_c + config.e_s @ spec.beta
        x = y[:, None] * signal[None, :] + noise * spec.sigma_diag[None, :]
        domains.append(DomainData(spec=spec, x=x, y=y))
    return MultiDomainDataset(config=config, domains=tuple(domains))


def ground_truth_classifier(config: GeneratorConfig) -> np.ndarray:
    """The generalizing direction: ``e_c`` minus its specific-span component."""
    return config.e_c - project_onto_span(config.e_s, config.e_c)


def config_to_jsonable(config: GeneratorConfig) -> dict:
    out = {
        "m": config.m,
        "k_true": config.k_true,
        "d_train": config.d_train,
        "d_val": config.d_val,
        "d_test": config.d_test,
        "n_per_domain": config.n_per_domain,
        "beta_low": config.beta_low,
        "beta_high": config.beta_high,
        "beta_test_low": config.beta_test_low,
        "beta_test_high": config.beta_test_high,
        "sigma_low": config.sigma_low,
        "sigma_high": config.sigma_high,
        "e_c": config.e_c.tolist(),
        "e_s": config.e_s.tolist(),
        "seed": config.seed,
    }
    return out


def config_from_jsonable(obj: dict, path=None) -> GeneratorConfig:
    try:
        return GeneratorConfig(
            m=int(obj["m"]),
            k_true=int(obj["k_true"]),
            d_train=int(obj["d_train"]),
            d_val=int(obj["d_val"]),
            d_test=int(obj["d_test"]),
            n_per_domain=int(obj["n_per_domain"]),
            beta_low=float(obj["beta_low"]),
            beta_high=float(obj["beta_high"]),
            beta_test_low=float(obj["beta_test_low"]),
            beta_test_high=float(obj["beta_test_high"]),
            sigma_low=float(obj["sigma_low"]),
            sigma_high=float(obj["sigma_high"]),
            e_c=np.asarray(obj["e_c"], dtype=np.float64),
            e_s=np.asarray(obj["e_s"], dtype=np.float64),
            seed=int(obj["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"bad generator config: {exc}", path=path) from exc


def save_dataset(dataset: MultiDomainDataset, path) -> None:
    """Write the dataset directory; see the module docstring for the layout."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": DATASET_FORMAT,
        "config": config_to_jsonable(dataset.config),
        "domains": [
            {
                "id": d.spec.id,
                "split": d.spec.split,
                "beta": d.spec.beta.tolist(),
                "sigma_diag": d.spec.sigma_diag.tolist(),
                "n": int(d.y.size),
                "file": f"domain_{d.spec.id:04d}.csv",
            }
            for d in dataset.domains
        ],
    }
    (root / "metadata.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n"
    )
    for d in dataset.domains:
        lines = ["y," + ",".join(f"x{j}" for j in range(dataset.config.m))]
        for i in range(d.y.size):
            feats = ",".join(FLOAT_FMT % val for val in d.x[i])
            lines.append(f"{int(d.y[i])},{feats}")
        (root / f"domain_{d.spec.id:04d}.csv").write_text("\n".join(lines) + "\n")


def load_dataset(path) -> MultiDomainDataset:
    """Inverse of :func:`save_dataset`; bit-exact for saved datasets."""
    root = Path(path)
    meta_path = root / "metadata.json"
    if not meta_path.is_file():
        raise DatasetFormatError("metadata.json not found", path=str(root))
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(
            f"invalid JSON: {exc.msg}", path=str(meta_path), line=exc.lineno
        ) from exc
    if not isinstance(meta, dict) or "format" not in meta:
        raise DatasetFormatError("missing 'format' field", path=str(meta_path))
    if meta["format"] != DATASET_FORMAT:
        raise FormatVersionError(DATASET_FORMAT, meta["format"], path=str(meta_path))
    config = config_from_jsonable(meta.get("config", {}), path=str(meta_path))
    domains = []
    for entry in meta.get("domains", []):
        spec = DomainSpec(
            id=int(entry["id"]),
            split=str(entry["split"]),
            beta=np.asarray(entry["beta"], dtype=np.float64),
            sigma_diag=np.asarray(entry["sigma_diag"], dtype=np.float64),
        )
        if spec.split not in _SPLITS:
            raise DatasetFormatError(
                f"unknown split {spec.split!r}", path=str(meta_path)
            )
        csv_path = root / str(entry["file"])
        x, y = _read_domain_csv(csv_path, config.m, int(entry["n"]))
        domains.append(DomainData(spec=spec, x=x, y=y))
    return MultiDomainDataset(config=config, domains=tuple(domains))


def _read_domain_csv(csv_path: Path, m: int, n: int):
    if not csv_path.is_file():
        raise DatasetFormatError("domain file not found", path=str(csv_path))
    lines = csv_path.read_text().splitlines()
    if not lines:
        raise DatasetFormatError("empty domain file", path=str(csv_path), line=1)
    expected_header = "y," + ",".join(f"x{j}" for j in range(m))
    if lines[0] != expected_header:
        raise DatasetFormatError(
            f"bad header {lines[0]!r}", path=str(csv_path), line=1
        )
    body = lines[1:]
    if len(body) != n:
        raise DatasetFormatError(
            f"expected {n} rows, found {len(body)}", path=str(csv_path),
            line=len(lines),
        )
    x = np.empty((n, m))
    y = np.empty(n, dtype=np.int64)
    for i, row in enumerate(body):
        parts = row.split(",")
        if len(parts) != m + 1:
            raise DatasetFormatError(
                f"expected {m + 1} fields, found {len(parts)}",
                path=str(csv_path), line=i + 2,
            )
        try:
            label = int(parts[0])
            feats = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise DatasetFormatError(
                f"bad numeric field: {exc}", path=str(csv_path), line=i + 2
            ) from exc
        if label not in (-1, 1):
            raise DatasetFormatError(
                f"label must be -1 or +1, got {label}", path=str(csv_path),
                line=i + 2,
            )
        y[i] = label
        x[i] = feats
    return x, y


def with_seed(config: GeneratorConfig, seed: int) -> GeneratorConfig:
    """Copy of ``config`` with a different seed."""
    return replace(config, seed=seed)
