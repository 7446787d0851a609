"""Command-line audit pipeline.

Stages (gen, train, calibrate, score, attribute, report) each write
their artifacts plus a manifest carrying the config hash, so a run can
be resumed stage by stage and stale artifacts are rejected.  `audit`
chains all stages; `experiment-regularization` sweeps batch-norm and
dropout variants.

Exit codes: 0 success, 2 configuration error, 3 missing or stale
artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .annot import LabelDistribution
from .attribution import (
    MaskingPolicy,
    attribute_testset_multi,
    audit_overlap,
    marginal_representation,
    merge_distributions,
    nonnegative_incidence,
    save_attributions_csv,
)
from .config import (
    PROFILE_NAMES,
    RunConfig,
    config_hash,
    load_config,
    save_config,
)
from .dataset import autolabel_dataset, gen_collected, gen_test
from .dataset import load as load_dataset
from .dataset import save as save_dataset
from .detector import (
    auroc,
    calibrate_temperature,
    compute_logits,
    load_calibration_json,
    make_clean_renderer,
    partition_outliers,
    records_from_logits,
    save_calibration_json,
    save_scores_csv,
    temperature_grid,
)
from .exceptions import (
    FormatError,
    MappingError,
    MissingArtifactError,
    NoForegroundError,
    RenderDomainError,
    SpecificationError,
    StaleArtifactError,
    TrainingFailureError,
    UndefinedOverlapError,
)
from .nn import evaluate, load_checkpoint, make_arch, save_checkpoint, train, write_history_csv
from .report import (
    auroc_by_arch_svg,
    deepest_arch,
    dump_json,
    expectation_vs_collected_svg,
    incidence_svg,
    overlap_table_rows,
    representation_svg,
    score_spread_svg,
    write_overlap_table,
)
from .seeds import derive
from .svgplot import PALETTE, bar_chart_svg

STAGES = ("gen", "train", "calibrate", "score", "attribute", "report")
COMMANDS = STAGES + ("audit", "experiment-regularization")

_STAGE_DIRS = {
    "gen": "datasets",
    "train": "checkpoints",
    "calibrate": "scores",
    "score": "scores",
    "attribute": "attributions",
    "report": "report",
    "experiment-regularization": "experiment",
}


def _manifest_path(run_dir: Path, stage: str) -> Path:
    return run_dir / _STAGE_DIRS[stage] / f"{stage}.manifest.json"


def _write_manifest(run_dir: Path, stage: str, cfg: RunConfig, extra: dict | None = None) -> None:
    obj = {
        "schema_version": 1,
        "stage": stage,
        "config_hash": config_hash(cfg),
        "profile": cfg.profile,
        "seed": cfg.seed,
    }
    obj.update(extra or {})
    path = _manifest_path(run_dir, stage)
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_json(obj, path)


def _require(cfg: RunConfig, run_dir: Path, *stages: str) -> dict:
    """Check upstream manifests; returns the last stage's manifest."""
    manifest: dict = {}
    for stage in stages:
        path = _manifest_path(run_dir, stage)
        if not path.exists():
            raise MissingArtifactError(
                f"no artifacts for stage '{stage}' under {run_dir}; "
                f"run `expecta {stage}` first"
            )
        with open(path) as fh:
            manifest = json.load(fh)
        have, want = manifest.get("config_hash", ""), config_hash(cfg)
        if have != want:
            raise StaleArtifactError(
                f"stage '{stage}' artifacts under {run_dir} were built from a "
                f"different config ({have[:12]} vs {want[:12]}); re-run `expecta {stage}`"
            )
    return manifest


def _arch_runs(cfg: RunConfig):
    for name in cfg.archs:
        for rep in range(cfg.repeat):
            yield name, rep, f"{name}/r{rep}"


def _banner(stage: str, message: str) -> None:
    print(f"[{stage}] {message}", flush=True)


def _load_collected(run_dir: Path):
    return load_dataset(run_dir / "datasets" / "collected")


def _load_val(run_dir: Path):
    path = run_dir / "datasets" / "collected_val"
    return load_dataset(path) if path.exists() else None


def _load_test(run_dir: Path):
    return load_dataset(run_dir / "datasets" / "test")


def _collected_support(run_dir: Path) -> LabelDistribution:
    """Auto-labeled support of the collected set, cached next to the data."""
    cache = run_dir / "datasets" / "collected_support.csv"
    if cache.exists():
        return LabelDistribution.load_csv(cache)
    support = LabelDistribution.from_annotations(autolabel_dataset(_load_collected(run_dir)))
    support.save_csv(cache)
    return support


def cmd_gen(cfg: RunConfig, run_dir: Path) -> None:
    t0 = time.perf_counter()
    ds_dir = run_dir / "datasets"
    ds_dir.mkdir(parents=True, exist_ok=True)
    collected = gen_collected(
        cfg.bias, cfg.n_collected, derive(cfg.seed, "gen", "collected"), cfg.canvas
    )
    save_dataset(collected, ds_dir / "collected")
    n_val = round(cfg.n_collected * cfg.train.val_fraction)
    if n_val >= 1:
        val = gen_collected(cfg.bias, n_val, derive(cfg.seed, "gen", "val"), cfg.canvas)
        save_dataset(val, ds_dir / "collected_val")
    test = gen_test(cfg.spec, cfg.m_test, derive(cfg.seed, "gen", "test"))
    save_dataset(test, ds_dir / "test")
    _write_manifest(
        run_dir, "gen", cfg,
        {"n_collected": cfg.n_collected, "n_val": n_val, "m_test": cfg.m_test},
    )
    _banner("gen", f"collected={cfg.n_collected} val={n_val} test={cfg.m_test} "
                   f"canvas={cfg.canvas[0]}x{cfg.canvas[1]} ({time.perf_counter() - t0:.1f}s)")


def cmd_train(cfg: RunConfig, run_dir: Path) -> None:
    _require(cfg, run_dir, "gen")
    collected = _load_collected(run_dir)
    val = _load_val(run_dir)
    val_accs: dict[str, float] = {}
    for name, rep, sub in _arch_runs(cfg):
        t0 = time.perf_counter()
        tcfg = replace(cfg.train, seed=derive(cfg.seed, "train", name, rep))
        model, history = train(collected, make_arch(name, cfg.canvas), tcfg, val_set=val)
        out = run_dir / "checkpoints" / sub
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, out)
        write_history_csv(history, out / "history.csv")
        val_accs[sub] = max(h["val_acc"] for h in history)
        _banner("train", f"{sub}: params={model.n_params} "
                         f"val_acc={val_accs[sub]:.4f} ({time.perf_counter() - t0:.1f}s)")
    _write_manifest(run_dir, "train", cfg, {"val_acc": val_accs})


def cmd_calibrate(cfg: RunConfig, run_dir: Path) -> None:
    _require(cfg, run_dir, "gen", "train")
    test = _load_test(run_dir)
    annotations = test.annotations()
    renderer = make_clean_renderer(cfg.canvas)
    grid = temperature_grid(*cfg.temp_grid)
    t_stars: dict[str, float] = {}
    for name, rep, sub in _arch_runs(cfg):
        t0 = time.perf_counter()
        model = load_checkpoint(run_dir / "checkpoints" / sub,
                                expected_arch=make_arch(name, cfg.canvas))
        result = calibrate_temperature(model, annotations, renderer, cfg.score_target, grid)
        out = run_dir / "scores" / sub
        out.mkdir(parents=True, exist_ok=True)
        save_calibration_json(result, out / "calibration.json")
        t_stars[sub] = result.t_star
        row = result.row(result.t_star)
        _banner("calibrate", f"{sub}: t_star={result.t_star:g} mean={row[1]:.3f} "
                             f"var={row[2]:.4f} ({time.perf_counter() - t0:.1f}s)")
    _write_manifest(run_dir, "calibrate", cfg, {"t_star": t_stars})


def cmd_score(cfg: RunConfig, run_dir: Path) -> None:
    _require(cfg, run_dir, "gen", "train", "calibrate")
    test = _load_test(run_dir)
    annotations = test.annotations()
    renderer = make_clean_renderer(cfg.canvas)
    support = _collected_support(run_dir)
    partition = partition_outliers(annotations, support)
    flags = partition.is_familiar(len(annotations))
    aurocs: dict[str, float] = {}
    for name, rep, sub in _arch_runs(cfg):
        t0 = time.perf_counter()
        model = load_checkpoint(run_dir / "checkpoints" / sub,
                                expected_arch=make_arch(name, cfg.canvas))
        cal = load_calibration_json(run_dir / "scores" / sub / "calibration.json")
        logits = compute_logits(model, annotations, renderer)
        recs_star = records_from_logits(annotations, logits, cal.t_star)
        recs_one = records_from_logits(annotations, logits, 1.0)
        out = run_dir / "scores" / sub
        out.mkdir(parents=True, exist_ok=True)
        save_scores_csv(recs_star, out / "scores.csv", familiar=flags)
        save_scores_csv(recs_one, out / "scores_t1.csv", familiar=flags)
        a_star = auroc([r.score for r in recs_star], flags)
        a_one = auroc([r.score for r in recs_one], flags)
        dump_json(
            {
                "t_star": cal.t_star,
                "auroc_tstar": a_star,
                "auroc_t1": a_one,
                "n_familiar": len(partition.familiar),
                "n_outlier": len(partition.outliers),
            },
            out / "summary.json",
        )
        aurocs[sub] = a_star
        _banner("score", f"{sub}: auroc={a_star:.4f} familiar={len(partition.familiar)} "
                         f"outliers={len(partition.outliers)} ({time.perf_counter() - t0:.1f}s)")
    _write_manifest(run_dir, "score", cfg, {"auroc": aurocs})


def cmd_attribute(cfg: RunConfig, run_dir: Path) -> None:
    _require(cfg, run_dir, "gen", "train", "calibrate")
    test = _load_test(run_dir)
    annotations = test.annotations()
    support = _collected_support(run_dir)
    expected = LabelDistribution.from_annotations(annotations)
    policy = MaskingPolicy(cfg.spec, cfg.background_count)
    means: dict[str, float] = {}
    for name, rep, sub in _arch_runs(cfg):
        t0 = time.perf_counter()
        model = load_checkpoint(run_dir / "checkpoints" / sub,
                                expected_arch=make_arch(name, cfg.canvas))
        cal = load_calibration_json(run_dir / "scores" / sub / "calibration.json")
        temps = sorted({1.0, cal.t_star})
        by_temp = attribute_testset_multi(
            model, temps, test, policy,
            derive(cfg.seed, "attr", name, rep), subset_size=cfg.m_attr,
        )
        out = run_dir / "attributions" / sub
        out.mkdir(parents=True, exist_ok=True)
        overlap_obj: dict = {}
        for key, t in (("t_star", cal.t_star), ("1", 1.0)):
            records = by_temp[t]
            suffix = "" if key == "t_star" else "_t1"
            save_attributions_csv(records, annotations, out / f"attributions{suffix}.csv")
            classes = sorted({annotations[r.index].y1 for r in records})
            p_plus = merge_distributions(
                [marginal_representation(records, annotations, k) for k in classes]
            )
            p_plus.save_csv(out / f"representation{suffix}.csv")
            table = audit_overlap(p_plus, support, expected=expected)
            table["t"] = t
            table["incidence"] = {str(j): v for j, v in nonnegative_incidence(records).items()}
            overlap_obj[key] = table
        dump_json(overlap_obj, out / "overlap.json")
        means[sub] = overlap_obj["t_star"]["estimated_mean"]
        _banner("attribute", f"{sub}: n={len(by_temp[cal.t_star])} "
                             f"mean_overlap={means[sub]:.4f} vs expectation "
                             f"{overlap_obj['t_star']['expected_mean']:.4f} "
                             f"({time.perf_counter() - t0:.1f}s)")
    _write_manifest(run_dir, "attribute", cfg, {"mean_overlap_estimated": means})


def _load_json(path: Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _load_scores_column(path: Path) -> list[float]:
    with open(path, newline="") as fh:
        return [float(row["score"]) for row in csv.DictReader(fh)]


def cmd_report(cfg: RunConfig, run_dir: Path) -> None:
    t0 = time.perf_counter()
    train_manifest = _require(cfg, run_dir, "gen", "train")
    _require(cfg, run_dir, "calibrate", "score", "attribute")
    test = _load_test(run_dir)
    annotations = test.annotations()
    support = _collected_support(run_dir)
    expected = LabelDistribution.from_annotations(annotations)
    classes = support.classes()

    arch_entries: dict[str, dict] = {}
    arch_tables: dict[str, dict] = {}
    for name in cfg.archs:
        t_stars, auroc_t1, auroc_star, est_means, est_means_t1 = [], [], [], [], []
        val_accs = []
        incid: dict[int, list[float]] = {j: [] for j in (2, 3, 4, 5, 6)}
        for rep in range(cfg.repeat):
            sub = f"{name}/r{rep}"
            summary = _load_json(run_dir / "scores" / sub / "summary.json")
            overlap = _load_json(run_dir / "attributions" / sub / "overlap.json")
            val_accs.append(train_manifest["val_acc"][sub])
            t_stars.append(summary["t_star"])
            auroc_t1.append(summary["auroc_t1"])
            auroc_star.append(summary["auroc_tstar"])
            est_means.append(overlap["t_star"]["estimated_mean"])
            est_means_t1.append(overlap["1"]["estimated_mean"])
            for j in incid:
                incid[j].append(overlap["t_star"]["incidence"][str(j)])
            if rep == 0:
                arch_tables[name] = overlap
        arch_entries[name] = {
            "layer_count": make_arch(name, cfg.canvas).layer_count(),
            "val_acc": float(np.mean(val_accs)),
            "t_star": float(np.mean(t_stars)),
            "auroc_t1": float(np.mean(auroc_t1)),
            "auroc_tstar": float(np.mean(auroc_star)),
            "mean_overlap_estimated": float(np.mean(est_means)),
            "mean_overlap_estimated_t1": float(np.mean(est_means_t1)),
            "nonneg_incidence": {str(j): float(np.mean(v)) for j, v in incid.items()},
        }

    deepest = deepest_arch(cfg)
    expected_mean = arch_tables[deepest]["t_star"]["expected_mean"]
    report = {
        "schema_version": 1,
        "profile": cfg.profile,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "classes": [int(k) for k in classes],
        "archs": arch_entries,
        "deepest_arch": deepest,
        "auroc": arch_entries[deepest]["auroc_tstar"],
        "t_star": arch_entries[deepest]["t_star"],
        "mean_overlap_expected": expected_mean,
        "mean_overlap_estimated": arch_entries[deepest]["mean_overlap_estimated"],
    }
    out = run_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    dump_json(report, out / "report.json")

    (out / "fig_expectation_vs_collected.svg").write_text(
        expectation_vs_collected_svg(expected, support, cfg.canvas)
    )
    deep_sub = f"{deepest}/r0"
    scores_star = _load_scores_column(run_dir / "scores" / deep_sub / "scores.csv")
    scores_one = _load_scores_column(run_dir / "scores" / deep_sub / "scores_t1.csv")
    deep_tstar = _load_json(run_dir / "scores" / deep_sub / "summary.json")["t_star"]
    (out / "fig_score_spread.svg").write_text(
        score_spread_svg(scores_one, scores_star, deep_tstar, cfg.score_target)
    )
    (out / "fig_auroc_by_arch.svg").write_text(
        auroc_by_arch_svg(
            cfg.archs,
            [arch_entries[a]["auroc_t1"] for a in cfg.archs],
            [arch_entries[a]["auroc_tstar"] for a in cfg.archs],
        )
    )
    (out / "fig_incidence.svg").write_text(
        incidence_svg(
            cfg.archs,
            {a: {j: arch_entries[a]["nonneg_incidence"][str(j)] for j in (2, 3, 4, 5, 6)}
             for a in cfg.archs},
        )
    )
    p_plus = LabelDistribution.load_csv(
        run_dir / "attributions" / deep_sub / "representation.csv"
    )
    (out / "fig_representation.svg").write_text(
        representation_svg(expected, support, p_plus, cfg.canvas)
    )
    rows = overlap_table_rows(cfg, arch_tables, arch_tables[deepest]["t_star"])
    write_overlap_table(rows, classes, out)
    _write_manifest(run_dir, "report", cfg)
    _banner("report", f"report.json auroc={report['auroc']:.4f} "
                      f"overlap {report['mean_overlap_estimated']:.3f} (estimate) vs "
                      f"{report['mean_overlap_expected']:.3f} (expectation) "
                      f"({time.perf_counter() - t0:.1f}s)")


def cmd_experiment_regularization(cfg: RunConfig, run_dir: Path) -> None:
    if cfg.profile not in ("desk", "paper"):
        raise SpecificationError(
            "experiment-regularization needs the desk or paper profile"
        )
    _require(cfg, run_dir, "gen")
    collected = _load_collected(run_dir)
    val = _load_val(run_dir)
    test = _load_test(run_dir)
    annotations = test.annotations()
    renderer = make_clean_renderer(cfg.canvas)
    grid = temperature_grid(*cfg.temp_grid)
    support = _collected_support(run_dir)
    flags = partition_outliers(annotations, support).is_familiar(len(annotations))
    holdout = gen_collected(
        cfg.bias, cfg.m_test, derive(cfg.seed, "exp", "holdout"), cfg.canvas
    )
    variants = (
        ("vanilla", {}),
        ("batchnorm", {"batch_norm": True}),
        ("dropout", {"dropout": 0.5}),
    )
    out = run_dir / "experiment"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name in cfg.archs:
        for vname, arch_kw in variants:
            accs, aurocs = [], []
            for rep in range(cfg.repeat):
                t0 = time.perf_counter()
                tcfg = replace(cfg.train, seed=derive(cfg.seed, "exp", name, vname, rep))
                model, _ = train(
                    collected, make_arch(name, cfg.canvas, **arch_kw), tcfg, val_set=val
                )
                accs.append(evaluate(model, holdout))
                cal = calibrate_temperature(
                    model, annotations, renderer, cfg.score_target, grid
                )
                logits = compute_logits(model, annotations, renderer)
                recs = records_from_logits(annotations, logits, cal.t_star)
                aurocs.append(auroc([r.score for r in recs], flags))
                _banner(
                    "experiment",
                    f"{name}/{vname}/r{rep}: acc={accs[-1]:.4f} auroc={aurocs[-1]:.4f} "
                    f"({time.perf_counter() - t0:.1f}s)",
                )
            rows.append((name, vname, float(np.mean(accs)), float(np.mean(aurocs))))
    with open(out / "regularization.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arch", "variant", "test_acc", "auroc"])
        for name, vname, acc, a in rows:
            writer.writerow([name, vname, repr(acc), repr(a)])
    variant_names = [vname for vname, _ in variants]
    for metric, idx, fname in (("test accuracy", 2, "regularization_accuracy.svg"),
                               ("AUROC", 3, "regularization_auroc.svg")):
        series = [
            (vname, PALETTE[vname],
             [row[idx] for row in rows if row[1] == vname])
            for vname in variant_names
        ]
        (out / fname).write_text(
            bar_chart_svg(
                f"Regularization effect on {metric}",
                list(cfg.archs), series, ylabel=metric, y_range=(0.0, 1.0),
            )
        )
    _write_manifest(run_dir, "experiment-regularization", cfg)
    _banner("experiment", f"wrote {out / 'regularization.csv'}")


def _new_run_dir(cfg: RunConfig) -> Path:
    if cfg.out_dir:
        run_dir = Path(cfg.out_dir)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
        run_dir = Path("runs") / f"{stamp}-{config_hash(cfg)[:8]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.json")
    return run_dir


def _find_run_dir(cfg: RunConfig) -> Path:
    if cfg.out_dir:
        run_dir = Path(cfg.out_dir)
        if not run_dir.exists():
            raise MissingArtifactError(
                f"run directory {run_dir} does not exist; run `expecta gen` first"
            )
        return run_dir
    suffix = config_hash(cfg)[:8]
    root = Path("runs")
    candidates = sorted(root.glob(f"*-{suffix}")) if root.exists() else []
    if not candidates:
        raise MissingArtifactError(
            "no run directory matches this config; run `expecta gen` first or pass --out"
        )
    return candidates[-1]


_STAGE_FUNCS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "score": cmd_score,
    "attribute": cmd_attribute,
    "report": cmd_report,
}


def _dispatch(command: str, cfg: RunConfig) -> int:
    if command == "audit":
        run_dir = _new_run_dir(cfg)
        for stage in STAGES:
            _STAGE_FUNCS[stage](cfg, run_dir)
    elif command == "gen":
        run_dir = _new_run_dir(cfg)
        cmd_gen(cfg, run_dir)
    elif command == "experiment-regularization":
        run_dir = _find_run_dir(cfg)
        cmd_experiment_regularization(cfg, run_dir)
    else:
        run_dir = _find_run_dir(cfg)
        _STAGE_FUNCS[command](cfg, run_dir)
    print(f"run directory: {run_dir}", flush=True)
    return 0


_OVERRIDE_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")


def _collect_overrides(tokens: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--"):
            raise SpecificationError(f"unexpected argument {token!r}")
        body = token[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            key = body
            if i + 1 >= len(tokens):
                raise SpecificationError(f"flag --{key} needs a value")
            value = tokens[i + 1]
            i += 2
        if not _OVERRIDE_KEY.fullmatch(key):
            raise SpecificationError(f"bad config override --{key}")
        overrides[key] = value
    return overrides


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expecta",
        description="Audit an image dataset against a declared expectation "
                    "distribution over its annotation labels.",
        epilog="Any other --dotted.path VALUE flag overrides the matching "
               "config field, e.g. --train.epochs 3 --bias.center_slack 4.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--profile", choices=PROFILE_NAMES,
                        help="preset to start from (default: desk)")
    parser.add_argument("--seed", type=int, help="root seed override")
    parser.add_argument("--out", help="run directory (default: runs/<stamp>-<hash>)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args, rest = _build_parser().parse_known_args(argv)
    try:
        overrides = _collect_overrides(rest)
        cfg = load_config(args.config, args.profile, args.seed, args.out, overrides)
        return _dispatch(args.command, cfg)
    except (MissingArtifactError, StaleArtifactError) as exc:
        print(f"expecta: {exc}", file=sys.stderr)
        return 3
    except (TrainingFailureError, UndefinedOverlapError, RenderDomainError,
            NoForegroundError) as exc:
        print(f"expecta: {exc}", file=sys.stderr)
        return 4
    except (SpecificationError, FormatError, MappingError) as exc:
        print(f"expecta: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"expecta: invalid JSON: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"expecta: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
