"""Command-line experiment harness.

Commands
--------
generate    sample a synthetic multi-domain dataset and write it to disk
compare     train the erm and csd arms over repeat seeds on shared datasets
sweep       train csd at each rank in the sweep axis (k=0 is the erm-like baseline)
ablate      train the six loss-toggle rows (common/specific/ortho in {Y,N})
decompose   closed-form split of a classifier matrix read from CSV
diagnose    per-domain Beta fits + head spectrum for a checkpoint/dataset pair

Exit codes: 0 success, 2 config error, 3 IO/parse error, 4 every run of an
arm failed, 5 degenerate decomposition.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .config import config_echo, load_experiment_config
from .datagen import (generate, ground_truth_classifier, load_dataset,
                      save_dataset, with_seed)
from .decomposition import decompose, decomposition_objective
from .diagnostics import (angle_to_truth, beta_mode, component_scores,
                          spearman_rank_correlation, stacked_head_spectrum)
from .errors import (AllRunsFailedError, ConfigError, DatasetFormatError,
                     DegenerateDecompositionError, FormatVersionError)
from .model import load_checkpoint, save_checkpoint
from .reports import (REPORT_FORMAT, atomic_write_text, format_float,
                      write_json, write_report_csv, write_timings_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_ALL_FAILED = 4
EXIT_DEGENERATE = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csdlab",
        description="synthetic multi-domain experiments with common/specific "
                    "classifier decomposition",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("--workers", type=int,
                       help="parallel runs (default: $CSDLAB_WORKERS or 1)")
        p.add_argument("--seed", type=int, help="override the config seed")

    p_gen = sub.add_parser("generate", help="write a synthetic dataset")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", required=True, help="dataset directory")
    p_gen.add_argument("--seed", type=int, help="override the config seed")

    for name in ("compare", "sweep", "ablate"):
        add_run_flags(sub.add_parser(name))

    p_dec = sub.add_parser("decompose", help="decompose a classifier matrix")
    p_dec.add_argument("matrix", help="CSV file, one classifier per column")
    p_dec.add_argument("k", type=int, help="specific-part rank")
    p_dec.add_argument("--out", required=True)

    p_diag = sub.add_parser("diagnose", help="component diagnostics")
    p_diag.add_argument("checkpoint", help="checkpoint JSON")
    p_diag.add_argument("dataset", help="dataset directory")
    p_diag.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatVersionError, DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AllRunsFailedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    except DegenerateDecompositionError as exc:
        print(f"degenerate decomposition: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


def console_main() -> None:
    sys.exit(main())


def _dispatch(args) -> int:
    if args.command == "generate":
        return _cmd_generate(args)
    if args.command in ("compare", "sweep", "ablate"):
        return _cmd_run(args)
    if args.command == "decompose":
        return _cmd_decompose(args)
    if args.command == "diagnose":
        return _cmd_diagnose(args)
    raise AssertionError(args.command)


def _cmd_generate(args) -> int:
    exp = load_experiment_config(args.config)
    seed = args.seed if args.seed is not None else exp.seed
    dataset = generate(with_seed(exp.generator, seed))
    save_dataset(dataset, args.out)
    cfg = dataset.config
    w_star = ground_truth_classifier(cfg)
    print(f"dataset written to {args.out}")
    print(f"domains: {cfg.d_train} train, {cfg.d_val} val, {cfg.d_test} test; "
          f"{cfg.n_per_domain} samples each; seed {seed}")
    print("ground-truth classifier: ["
          + ", ".join(format_float(v) for v in w_star) + "]")
    return EXIT_OK


def _workers(args) -> int:
    if args.workers is not None:
        value = args.workers
    else:
        value = int(os.environ.get("CSDLAB_WORKERS", "1"))
    if value < 1:
        raise ConfigError("workers must be >= 1")
    return value


def _cmd_run(args) -> int:
    exp = load_experiment_config(args.config)
    if args.seed is not None:
        from dataclasses import replace
        exp = replace(exp, seed=args.seed)
    out_dir = args.out or exp.output_dir
    if out_dir is None:
        raise ConfigError("no output directory (--out flag or output_dir field)",
                          field="output_dir")
    if args.command == "compare":
        arms = experiments.compare_arms(exp)
    elif args.command == "sweep":
        if not exp.sweep.k:
            raise ConfigError("sweep command needs a non-empty rank axis",
                              field="sweep.k")
        arms = experiments.sweep_arms(exp)
    else:
        if not exp.sweep.ablation:
            raise ConfigError("ablate command needs sweep.ablation = true",
                              field="sweep.ablation")
        arms = experiments.ablation_arms(exp)

    result = experiments.execute(exp, arms, args.command, workers=_workers(args))
    _write_run_outputs(Path(out_dir), exp, result)

    for row in result.rows:
        if row.row == "mean":
            print(f"{args.command} {row.mode} k={row.k} "
                  f"[{'Y' if row.use_common_loss else 'N'}"
                  f"{'Y' if row.use_specific_loss else 'N'}"
                  f"{'Y' if row.use_ortho_reg else 'N'}] "
                  f"out-domain acc mean {row.out_domain_acc:.4f}")
    ok_counts = result.arm_ok_counts()
    dead = [label for label, n in ok_counts.items() if n == 0]
    if dead:
        raise AllRunsFailedError(
            f"all runs failed for arm(s): {', '.join(dead)} (see report files)"
        )
    print(f"report written to {out_dir}")
    return EXIT_OK


def _write_run_outputs(out: Path, exp, result) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(out / "report.csv", result.rows)
    write_json(out / "report.json", {
        "format": REPORT_FORMAT,
        "command": result.command,
        "config": config_echo(exp),
        "arms": [arm.label for arm in result.arms],
        "repeats": exp.repeats,
        "seed": exp.seed,
        "failures": result.failures,
    })
    write_timings_csv(out / "timings.csv", result.timings)
    first_label = result.arms[0].label
    for art in result.artifacts:
        if art.label == first_label:
            save_dataset(art.dataset, out / "datasets" / f"run_{art.run_index:04d}")
        if art.params is not None:
            safe = art.label.replace(",", "_")
            save_checkpoint(
                art.params,
                out / "checkpoints" / f"run_{art.run_index:04d}_{safe}.json",
                meta={
                    "command": result.command,
                    "run_index": art.run_index,
                    "label": art.label,
                    "dataset_seed": art.dataset_seed,
                    "train_seed": art.train_seed,
                    "seed": exp.seed,
                    "config": config_echo(exp),
                },
            )


def _read_matrix_csv(path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise DatasetFormatError("matrix file not found", path=str(p))
    rows = []
    lines = p.read_text().splitlines()
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            rows.append([float(f) for f in line.split(",")])
        except ValueError as exc:
            raise DatasetFormatError(f"bad numeric field: {exc}", path=str(p),
                                     line=i + 1) from exc
        if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
            raise DatasetFormatError(
                f"inconsistent row width ({len(rows[-1])} vs {len(rows[0])})",
                path=str(p), line=i + 1,
            )
    if not rows:
        raise DatasetFormatError("matrix file is empty", path=str(p), line=1)
    return np.asarray(rows, dtype=np.float64)


def _cmd_decompose(args) -> int:
    w = _read_matrix_csv(args.matrix)
    m, d = w.shape
    if not 0 <= args.k <= d - 1:
        raise ConfigError(f"k must be in [0, {d - 1}] for a {m}x{d} matrix",
                          field="k")
    dec = decompose(w, args.k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_float_csv(out / "w_c.csv", dec.w_c[:, None])
    _write_float_csv(out / "w_s.csv", dec.w_s)
    _write_float_csv(out / "gamma.csv", dec.gamma)
    objective = decomposition_objective(w, dec)
    residual = dec.orthogonality_residual()
    write_json(out / "summary.json", {
        "m": m, "d": d, "k": args.k,
        "objective": objective,
        "orthogonality_residual": residual,
    })
    print(f"objective {format_float(objective)}; "
          f"orthogonality residual {format_float(residual)}; files in {out}")
    return EXIT_OK


def _write_float_csv(path, arr: np.ndarray) -> None:
    lines = [",".join(format_float(v) for v in row) for row in np.atleast_2d(arr)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _cmd_diagnose(args) -> int:
    params, ckpt_meta = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    include_specific = params.k >= 1
    if not include_specific:
        print("notice: k=0 checkpoint, specific-side fits omitted")
    report = component_scores(params, dataset, include_specific=include_specific)
    spectrum = stacked_head_spectrum(params)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["domain_id,side,alpha,beta,mode,mode_at_boundary,n,mean,variance,"
             "fit_error"]
    for rec in report.records:
        lines.append(_beta_fit_csv_row(rec.domain_id, "common", rec.common,
                                       rec.common_error))
        if include_specific:
            lines.append(_beta_fit_csv_row(rec.domain_id, "specific",
                                           rec.specific, rec.specific_error))
    atomic_write_text(out / "beta_fits.csv", "\n".join(lines) + "\n")
    atomic_write_text(
        out / "spectrum.csv",
        "\n".join(["index,singular_value"]
                  + [f"{i},{format_float(s)}" for i, s in enumerate(spectrum)])
        + "\n",
    )

    angle = None
    if params.c == 2:
        w_eff = params.w_c[1] - params.w_c[0]
        w_star = ground_truth_classifier(dataset.config)
        if np.linalg.norm(w_eff) > 0 and np.linalg.norm(w_star) > 0:
            angle = angle_to_truth(w_eff, w_star)

    spearman = None
    if include_specific and dataset.config.k_true == 1:
        fitted = [r for r in report.records if r.specific is not None]
        if len(fitted) == len(report.records) and len(fitted) >= 2:
            betas = [float(d.spec.beta[0]) for d in dataset.split("train")]
            modes = [beta_mode(r.specific)[0] for r in report.records]
            spearman = spearman_rank_correlation(modes, betas)

    write_json(out / "diagnose.json", {
        "angle_to_truth_deg": angle,
        "specific_side": "ok" if include_specific else "omitted (k=0)",
        "specific_mode_order": report.specific_mode_order(),
        "spearman_modes_vs_beta": spearman,
        "spectrum_rank_bound": params.k + 1,
        "checkpoint_meta": ckpt_meta,
    })
    print(f"diagnostics written to {out}")
    return EXIT_OK


def _beta_fit_csv_row(domain_id, side, fit, error) -> str:
    if fit is None:
        msg = (error or "unknown").replace(",", ";")
        return f"{domain_id},{side},nan,nan,nan,,0,nan,nan,{msg}"
    mode, boundary = beta_mode(fit)
    return (f"{domain_id},{side},{format_float(fit.alpha)},"
            f"{format_float(fit.beta)},{format_float(mode)},"
            f"{'Y' if boundary else 'N'},{fit.n},{format_float(fit.mean)},"
            f"{format_float(fit.variance)},")
