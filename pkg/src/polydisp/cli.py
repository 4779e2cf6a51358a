"""Command-line interface: ``polydisp {simulate,fit,index,study,curve,select}``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import shlex
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .casestudy import CATEGORIES, MODEL_SEQUENCE, fixture_path, simulate_case_study
from .data import ModelSpec
from .dispersion import dispersion_index
from .exceptions import DatasetValidationError
from .io import (DatasetSchema, config_hash, fit_report_text, load_config, read_dataset,
                 read_fitted_probs, write_dataset, write_estimates, write_fitted_probs,
                 write_manifest, write_text)
from .model import FitOptions, fit
from .selection import select_models, with_reference
from .simulation import (GRID_M, GRID_N, GRID_SIGMA2, GRID_T, GRID_J, ScenarioConfig,
                         default_grid, histogram_bins, percentile_curve, run_study,
                         simulate_dataset, summary_csv)

logger = logging.getLogger("polydisp")

STUDY_DEFAULTS = {"seed": 2024, "replicates": 200, "workers": 1, "bins": 20}


class CliError(Exception):
    pass


def _csv_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _manifest_base(args, config=None):
    return {
        "tool": "polydisp",
        "version": __version__,
        "command": shlex.join(["polydisp"] + args.argv),
        "config_hash": config_hash(config if config is not None else vars_for_hash(args)),
    }


def vars_for_hash(args):
    return {k: v for k, v in vars(args).items() if k not in ("func", "argv")}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> dict:
    return load_config(args.config) if getattr(args, "config", None) else {}


def _resolve_reference(value, categories) -> int:
    if value is None:
        return 0
    if value in categories:
        return categories.index(value)
    try:
        idx = int(value)
    except ValueError:
        raise CliError(f"unknown reference category {value!r}; categories are "
                       f"{', '.join(categories)}") from None
    if not 1 <= idx <= len(categories):
        raise CliError(f"reference category index {idx} outside 1..{len(categories)}")
    return idx - 1


def _load_data(args):
    schema = DatasetSchema(
        categories=tuple(_csv_list(args.categories)) if args.categories else (),
        group_size=args.group_size,
        factors=tuple(_csv_list(args.factors)) if args.factors else (),
    )
    return read_dataset(args.data, schema)


def _spec_from(args, data) -> ModelSpec:
    terms = []
    for t in args.terms or []:
        terms += _csv_list(t)
    return ModelSpec(terms=tuple(terms),
                     reference=_resolve_reference(args.reference_category, list(data.categories)),
                     random_intercept=not args.no_random_intercept,
                     sigma2=args.sigma2)


# --- subcommands -----------------------------------------------------------

def cmd_simulate(args):
    cfg = _config(args).get("scenario", {})
    fields = {
        "n_units": args.n_units, "n_categories": args.n_categories,
        "group_size": args.group_size, "n_times": args.n_times,
        "sigma2": args.sigma2, "seed": args.seed, "theta": args.theta,
    }
    cfg.update({k: v for k, v in fields.items() if v is not None})
    if isinstance(cfg.get("theta"), str):
        cfg["theta"] = [float(v) for v in _csv_list(cfg["theta"])]
    scenario = ScenarioConfig(**cfg)
    data = simulate_dataset(scenario, np.random.default_rng(scenario.seed))
    out = _out_dir(args)
    write_dataset(data, out / "dataset.csv")
    man = _manifest_base(args, asdict(scenario))
    man.update(seed=scenario.seed, scenario=asdict(scenario))
    write_manifest(out / "manifest.txt", man)


def _fit_and_report(args, data, out):
    spec = _spec_from(args, data)
    result = fit(spec, data)
    write_text(out / "fit_report.txt", fit_report_text(result))
    write_estimates(result, out / "estimates.csv")
    write_fitted_probs(result, data, out / "fitted_probs.csv")
    if not result.converged:
        logger.warning("fit did not converge: %s", result.message)
    return result


def cmd_fit(args):
    data = _load_data(args)
    out = _out_dir(args)
    result = _fit_and_report(args, data, out)
    write_manifest(out / "manifest.txt", _manifest_base(args))
    if not result.converged:
        raise CliError(f"fit did not converge: {result.message}")


def cmd_index(args):
    data = _load_data(args)
    out = _out_dir(args)
    if args.fitted:
        fitted = read_fitted_probs(args.fitted, data)
    else:
        fitted = _fit_and_report(args, data, out)
    report = dispersion_index(data, fitted)
    write_text(out / "dispersion.txt", report.to_text())
    write_text(out / "dispersion.csv", report.to_csv())
    write_manifest(out / "manifest.txt", _manifest_base(args))
    print(f"lambda_longitudinal = {report.lambda_longitudinal!r}")


def _study_grid(conf, seed, replicates):
    grid = conf.get("grid")
    if not grid:
        return default_grid(seed=seed, replicates=replicates)
    import itertools
    keys = ("N", "J", "m", "T", "sigma2")
    defaults = dict(zip(keys, (GRID_N, GRID_J, GRID_M, GRID_T, GRID_SIGMA2)))
    unknown = set(grid) - set(keys)
    if unknown:
        raise CliError(f"unknown grid keys {sorted(unknown)}; use {', '.join(keys)}")
    values = [list(grid.get(k, defaults[k])) for k in keys]
    thetas = {int(k): tuple(v) for k, v in (conf.get("theta") or {}).items()}
    cells = list(itertools.product(*values))
    seeds = np.random.SeedSequence(seed).spawn(len(cells))
    return [ScenarioConfig(n_units=N, n_categories=J, group_size=m, n_times=T, sigma2=float(s2),
                           theta=thetas.get(J), replicates=replicates,
                           seed=int(sd.generate_state(1)[0]))
            for (N, J, m, T, s2), sd in zip(cells, seeds)]


def _study_settings(args):
    conf = _config(args)
    settings = dict(STUDY_DEFAULTS)
    settings.update({k: conf[k] for k in STUDY_DEFAULTS if k in conf})
    for key in STUDY_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    if settings["replicates"] < 1:
        raise CliError("--replicates must be at least 1")
    if settings["workers"] < 1:
        raise CliError("--workers must be at least 1")
    return conf, settings


def cmd_study(args):
    conf, st = _study_settings(args)
    cfgs = _study_grid(conf, st["seed"], st["replicates"])
    if args.sigma2 is not None:
        cfgs = [c for c in cfgs if c.sigma2 == args.sigma2] or \
            [replace(c, sigma2=args.sigma2) for c in cfgs]
    results = run_study(cfgs, workers=st["workers"])
    out = _out_dir(args)
    write_text(out / "summary.csv", summary_csv(results))
    with open(out / "samples.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "J", "m", "T", "sigma2", "replicate", "status", "lambda_longitudinal"])
        for r in results:
            c = r.config
            for k, (v, s) in enumerate(zip(r.indices, r.statuses)):
                w.writerow([c.n_units, c.n_categories, c.group_size, c.n_times, c.sigma2, k, s,
                            repr(float(v)) if np.isfinite(v) else ""])
    with open(out / "histograms.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "J", "m", "T", "sigma2", "bin", "left", "right", "count"])
        for r in results:
            if r.samples.size == 0:
                continue
            edges, counts = histogram_bins(r.samples, st["bins"])
            c = r.config
            for b, cnt in enumerate(counts):
                w.writerow([c.n_units, c.n_categories, c.group_size, c.n_times, c.sigma2, b,
                            repr(float(edges[b])), repr(float(edges[b + 1])), int(cnt)])
    man = _manifest_base(args, {"settings": st, "config": conf, "sigma2": args.sigma2})
    man.update(seed=st["seed"], replicates=st["replicates"], workers=st["workers"],
               scenarios=len(cfgs),
               grid=conf.get("grid") or {"N": GRID_N, "J": GRID_J, "m": GRID_M, "T": GRID_T,
                                         "sigma2": GRID_SIGMA2},
               excluded={r.config.label: r.summary.excluded for r in results},
               unreliable=[r.config.label for r in results if r.summary.unreliable])
    write_manifest(out / "manifest.txt", man)


def cmd_curve(args):
    conf, st = _study_settings(args)
    m_values = [int(v) for v in _csv_list(args.m_values)] if args.m_values else \
        conf.get("m_values", [1, 2, 3, 5, 10])
    template = ScenarioConfig(n_units=args.n_units or conf.get("N", 100),
                              n_categories=args.n_categories or conf.get("J", 3),
                              n_times=args.n_times or conf.get("T", 10),
                              replicates=st["replicates"], seed=st["seed"])
    points = percentile_curve(template.n_categories, template.n_times, m_values, template,
                              workers=st["workers"])
    out = _out_dir(args)
    with open(out / "curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "sigma2", "mean", "p2.5", "p97.5", "n_used"])
        for p in points:
            w.writerow([p.group_size, p.sigma2, repr(p.mean), repr(p.p2_5), repr(p.p97_5),
                        p.n_used])
    man = _manifest_base(args, {"settings": st, "m_values": m_values})
    man.update(seed=st["seed"], replicates=st["replicates"], m_values=m_values,
               template=asdict(template))
    write_manifest(out / "manifest.txt", man)


def cmd_select(args):
    if args.data:
        data = _load_data(args)
    else:
        from importlib import resources
        with resources.as_file(fixture_path()) as path:
            data = read_dataset(path, DatasetSchema(categories=CATEGORIES, factors=("treat",)))
    if args.treatment not in data.factors and args.treatment != "treat":
        raise CliError(f"treatment factor {args.treatment!r} not in dataset")
    models = MODEL_SEQUENCE
    if args.treatment != "treat":
        models = [(lbl, replace(spec, terms=tuple(t.replace("treat", args.treatment)
                                                  for t in spec.terms)))
                  for lbl, spec in models]
    models = with_reference(models, _resolve_reference(args.reference_category,
                                                       list(data.categories)))
    sel = select_models(data, models, alpha=args.alpha)
    best = sel.selected_fit
    report = dispersion_index(data, best)
    out = _out_dir(args)
    write_text(out / "deviance_table.csv", sel.deviance_table_csv())
    write_estimates(best, out / "estimates.csv")
    with open(out / "variances.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + [f"observed_{c}" for c in data.categories]
                   + [f"expected_{c}" for c in data.categories])
        for t, tm in enumerate(data.times):
            w.writerow([tm] + [f"{v:.2f}" for v in report.observed_var[:, t]]
                       + [f"{v:.2f}" for v in report.expected_var[:, t]])
    write_text(out / "dispersion.txt", report.to_text())
    write_text(out / "selection.txt",
               f"selected_model = {sel.selected}\n"
               f"selected_predictor = {sel.rows[sel.selected - 1].label}\n"
               f"lambda_longitudinal = {report.lambda_longitudinal!r}\n")
    write_manifest(out / "manifest.txt", _manifest_base(args))
    print(sel.deviance_table_csv(), end="")
    print(f"lambda_longitudinal = {report.lambda_longitudinal:.3f}")


def cmd_fixture(args):
    """Regenerate the case-study fixture CSV."""
    data = simulate_case_study(seed=args.seed, sigma2=args.sigma2 or 0.01)
    write_dataset(data, args.out)


# --- parser ----------------------------------------------------------------

def _add_data_args(p, required=True):
    p.add_argument("--data", required=required, help="long-format dataset CSV")
    p.add_argument("--categories", help="comma-separated category order")
    p.add_argument("--factors", help="comma-separated covariate columns to treat as factors")
    p.add_argument("--group-size", type=int, help="declared group size m")
    p.add_argument("--reference-category", help="reference category label or 1-based index")


def _add_model_args(p):
    p.add_argument("--terms", action="append",
                   help="fixed-effect terms, comma separated (e.g. x,treat*time)")
    p.add_argument("--sigma2", type=float, help="fix the random-intercept variance")
    p.add_argument("--no-random-intercept", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polydisp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"polydisp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one dataset from a scenario")
    p.add_argument("--config")
    p.add_argument("--n-units", type=int)
    p.add_argument("--n-categories", type=int)
    p.add_argument("--group-size", type=int)
    p.add_argument("--n-times", type=int)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--theta", help="comma-separated intercepts then slopes")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a mixed generalized-logits model")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("index", help="compute the longitudinal dispersion index")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--fitted", help="fitted probabilities CSV from a previous fit")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    for name, func, helptext in (("study", cmd_study, "run the simulation study"),
                                 ("curve", cmd_curve, "index percentiles against group size")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", required=True)
        if name == "study":
            p.add_argument("--sigma2", type=float, help="restrict the grid to this variance")
            p.add_argument("--bins", type=int)
        else:
            p.add_argument("--m-values", help="comma-separated group sizes")
            p.add_argument("--n-units", type=int)
            p.add_argument("--n-categories", type=int)
            p.add_argument("--n-times", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("select", help="nested-model deviance analysis")
    _add_data_args(p, required=False)
    p.add_argument("--treatment", default="treat", help="treatment factor column")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("fixture", help="write the synthetic case-study dataset")
    p.add_argument("--seed", type=int, default=20140301)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, DatasetValidationError, ValueError, KeyError, OSError,
            RuntimeError) as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        print(f"polydisp {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
