"""Experiment runners shared by the CLI commands.

Each run is fully independent: its dataset seed and training seed are
derived from ``base_seed + run_index``, so runs can execute on a thread pool
in any order without changing results. Within one run index, every arm
(erm/csd, rank value, toggle row) trains on a bit-identical dataset and
starts from identical parameter draws.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import ExperimentConfig
from .datagen import MultiDomainDataset, generate, ground_truth_classifier, with_seed
from .diagnostics import accuracy, angle_to_truth
from .errors import NumericOverflowError
from .model import CsdConfig, CsdParams, train
from .rng import derive_run_seeds

# Toggle rows (use_common_loss, use_specific_loss, use_ortho_reg) for the
# ablation command; the last row is the full objective.
ABLATION_TOGGLES = (
    (True, False, False),
    (False, True, False),
    (False, True, True),
    (True, False, True),
    (True, True, False),
    (True, True, True),
)


@dataclass(frozen=True)
class ArmSpec:
    """One training configuration evaluated across all repeat seeds."""

    label: str
    mode: str
    k: int
    lam: float
    kappa: float
    use_common_loss: bool = True
    use_specific_loss: bool = True
    use_ortho_reg: bool = True

    def group_key(self):
        return (self.mode, self.k, self.lam, self.kappa, self.use_common_loss,
                self.use_specific_loss, self.use_ortho_reg)


@dataclass
class RunRow:
    row: str  # "run" | "mean" | "std"
    run_index: int | None
    seed: int | None
    mode: str
    k: int
    lam: float
    kappa: float
    use_common_loss: bool
    use_specific_loss: bool
    use_ortho_reg: bool
    status: str
    in_domain_acc: float = float("nan")
    out_domain_acc: float = float("nan")
    angle_to_truth_deg: float = float("nan")
    specific_axis_ratio: float = float("nan")
    final_loss_specific: float = float("nan")
    final_loss_common: float = float("nan")
    final_ortho_penalty: float = float("nan")


@dataclass
class RunArtifact:
    run_index: int
    label: str
    params: CsdParams | None
    dataset: MultiDomainDataset
    dataset_seed: int
    train_seed: int


@dataclass
class ExperimentResult:
    command: str
    arms: tuple[ArmSpec, ...]
    rows: list[RunRow]          # run rows, then mean/std rows per arm
    timings: list[tuple]        # (run_index, label, wall_time_s)
    artifacts: list[RunArtifact]
    failures: list[dict]

    def arm_ok_counts(self) -> dict[str, int]:
        counts = {arm.label: 0 for arm in self.arms}
        by_key = {arm.group_key(): arm.label for arm in self.arms}
        for row in self.rows:
            if row.row == "run" and row.status == "ok":
                key = (row.mode, row.k, row.lam, row.kappa, row.use_common_loss,
                       row.use_specific_loss, row.use_ortho_reg)
                counts[by_key[key]] += 1
        return counts


def specific_axis_ratio(w_eff: np.ndarray, config) -> float:
    """max_j |<w_eff, e_s_j>| / |<w_eff, e_c>| with unit-normalized axes.

    The scaled-solution diagnostic: how much weight the common head puts on
    the specific directions relative to the common direction.
    """
    e_c = config.e_c / np.linalg.norm(config.e_c)
    denom = abs(float(w_eff @ e_c))
    best = 0.0
    for j in range(config.k_true):
        col = config.e_s[:, j]
        best = max(best, abs(float(w_eff @ col)) / np.linalg.norm(col))
    if denom == 0.0:
        return float("inf")
    return best / denom


def _run_metrics(params: CsdParams, history, dataset: MultiDomainDataset) -> dict:
    last = history[-1]
    out = {
        "in_domain_acc": accuracy(params, dataset, "train", "common"),
        "out_domain_acc": accuracy(params, dataset, "test", "common"),
        "final_loss_specific": last.loss_specific,
        "final_loss_common": last.loss_common,
        "final_ortho_penalty": last.ortho_penalty,
        "angle_to_truth_deg": float("nan"),
        "specific_axis_ratio": float("nan"),
    }
    if params.c == 2:
        w_eff = params.w_c[1] - params.w_c[0]
        if np.linalg.norm(w_eff) > 0.0:
            w_star = ground_truth_classifier(dataset.config)
            if np.linalg.norm(w_star) > 0.0:
                out["angle_to_truth_deg"] = angle_to_truth(w_eff, w_star)
            out["specific_axis_ratio"] = specific_axis_ratio(w_eff, dataset.config)
    return out


def _run_one(exp: ExperimentConfig, arm: ArmSpec, run_index: int):
    dataset_seed, train_seed = derive_run_seeds(exp.seed, run_index)
    dataset = generate(with_seed(exp.generator, dataset_seed))
    train_cfg = replace(
        exp.train,
        mode=arm.mode,
        seed=train_seed,
        use_common_loss=arm.use_common_loss,
        use_specific_loss=arm.use_specific_loss,
        use_ortho_reg=arm.use_ortho_reg,
    )
    csd_cfg = CsdConfig(k=arm.k, lam=arm.lam, kappa=arm.kappa, c=exp.csd.c,
                        gamma_activation=exp.csd.gamma_activation)
    row = RunRow(
        row="run", run_index=run_index, seed=exp.seed + run_index,
        mode=arm.mode, k=arm.k, lam=arm.lam, kappa=arm.kappa,
        use_common_loss=arm.use_common_loss,
        use_specific_loss=arm.use_specific_loss,
        use_ortho_reg=arm.use_ortho_reg, status="ok",
    )
    start = time.perf_counter()
    params = None
    failure = None
    try:
        params, history = train(dataset, train_cfg, csd_cfg)
        for name, value in _run_metrics(params, history, dataset).items():
            setattr(row, name, value)
    except NumericOverflowError as exc:
        row.status = f"failed: {exc}"
        failure = {"run_index": run_index, "label": arm.label, "error": str(exc)}
    wall = time.perf_counter() - start
    artifact = RunArtifact(run_index=run_index, label=arm.label, params=params,
                           dataset=dataset, dataset_seed=dataset_seed,
                           train_seed=train_seed)
    return row, wall, artifact, failure


def _aggregate_rows(arms, run_rows) -> list[RunRow]:
    metric_names = ("in_domain_acc", "out_domain_acc", "angle_to_truth_deg",
                    "specific_axis_ratio", "final_loss_specific",
                    "final_loss_common", "final_ortho_penalty")
    out = []
    for arm in arms:
        ok = [
            r for r in run_rows
            if r.status == "ok"
            and (r.mode, r.k, r.lam, r.kappa, r.use_common_loss,
                 r.use_specific_loss, r.use_ortho_reg) == arm.group_key()
        ]
        for stat in ("mean", "std"):
            agg = RunRow(
                row=stat, run_index=None, seed=None, mode=arm.mode, k=arm.k,
                lam=arm.lam, kappa=arm.kappa,
                use_common_loss=arm.use_common_loss,
                use_specific_loss=arm.use_specific_loss,
                use_ortho_reg=arm.use_ortho_reg,
                status=f"aggregate-of-{len(ok)}",
            )
            for name in metric_names:
                values = np.array([getattr(r, name) for r in ok])
                if values.size == 0:
                    continue
                if stat == "mean":
                    setattr(agg, name, float(np.mean(values)))
                else:
                    setattr(agg, name,
                            float(np.std(values, ddof=1)) if values.size > 1 else 0.0)
            out.append(agg)
    return out


def execute(exp: ExperimentConfig, arms, command: str,
            workers: int = 1) -> ExperimentResult:
    """Train every (run_index, arm) job and assemble rows + aggregates."""
    arms = tuple(arms)
    jobs = [(ri, arm) for ri in range(exp.repeats) for arm in arms]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda j: _run_one(exp, j[1], j[0]), jobs))
    else:
        outcomes = [_run_one(exp, arm, ri) for ri, arm in jobs]

    rows = [o[0] for o in outcomes]
    timings = [(job[0], job[1].label, o[1]) for job, o in zip(jobs, outcomes)]
    artifacts = [o[2] for o in outcomes]
    failures = [o[3] for o in outcomes if o[3] is not None]
    rows_all = rows + _aggregate_rows(arms, rows)
    return ExperimentResult(command=command, arms=arms, rows=rows_all,
                            timings=timings, artifacts=artifacts,
                            failures=failures)


def compare_arms(exp: ExperimentConfig) -> tuple[ArmSpec, ...]:
    base = dict(k=exp.csd.k, lam=exp.csd.lam, kappa=exp.csd.kappa)
    return (
        ArmSpec(label="erm", mode="erm", use_common_loss=True,
                use_specific_loss=False, use_ortho_reg=False, **base),
        ArmSpec(label="csd", mode="csd", **base),
    )


def sweep_arms(exp: ExperimentConfig) -> tuple[ArmSpec, ...]:
    lams = exp.sweep.lam or (exp.csd.lam,)
    kappas = exp.sweep.kappa or (exp.csd.kappa,)
    arms = []
    for k in exp.sweep.k:
        for lam in lams:
            for kappa in kappas:
                label = f"k={k}"
                if len(lams) > 1:
                    label += f",lam={lam:g}"
                if len(kappas) > 1:
                    label += f",kappa={kappa:g}"
                arms.append(ArmSpec(label=label, mode="csd", k=k, lam=lam,
                                    kappa=kappa))
    return tuple(arms)


def ablation_arms(exp: ExperimentConfig) -> tuple[ArmSpec, ...]:
    arms = []
    for common, specific, ortho in ABLATION_TOGGLES:
        label = "".join("Y" if f else "N" for f in (common, specific, ortho))
        arms.append(ArmSpec(label=label, mode="csd", k=exp.csd.k,
                            lam=exp.csd.lam, kappa=exp.csd.kappa,
                            use_common_loss=common, use_specific_loss=specific,
                            use_ortho_reg=ortho))
    return tuple(arms)
