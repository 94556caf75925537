"""Command-line front end: run protocols, fit capacity curves, query the
quadratic closed forms, compare fitted models, and drive the Langevin
sampler.

Exit codes: 0 success, 2 configuration or parse problems, 3 training or
chain failures, 4 estimator divergence.
"""

from __future__ import annotations

import json
import os
import re
import sys
from argparse import ArgumentParser

import numpy as np

from . import report
from .errors import (
    AllTied,
    CapmeterError,
    ConfigError,
    DegenerateCurve,
    DegenerateDesign,
    FitDiverged,
    InsufficientPoints,
    InvalidArgument,
    NonFiniteState,
    OutOfRange,
    ParseError,
    QuadratureFailure,
    SolverFailure,
    TrainingFailure,
    UndefinedThreshold,
)
from .estimators import (
    capacity_from_polynomial,
    capacity_from_sigmoid,
    capacity_loss_regression,
    energy_from_sigmoid,
    fit_monotone_polynomial,
    fit_sigmoid_capacity,
    freezing_threshold,
    kendall_tau,
)
from .learners import (
    SyntheticConfig,
    gen_synthetic,
    knn_learner,
    load_tabular,
    logistic_learner,
    mlp_learner,
)
from .oracle import (
    HessianSpectrum,
    PriorKind,
    load_spectrum,
    pacbayes_bound,
    pacbayes_effective_dim,
    quad_capacity_exact,
    quad_capacity_hm,
)
from .protocol import (
    RECORD_HEADER,
    EnergyCurve,
    ProtocolConfig,
    estimate_avg_energy,
    ingest_records,
    run_protocol,
    write_records,
)
from .sgld import (
    LogisticEnergy,
    MlpEnergy,
    QuadraticEnergy,
    RowCount,
    SgldConfig,
    run_incremental_protocol,
)

CURVE_HEADER = "sample_size,u_mean,u_stderr,record_count"

_EXIT_FIT = (FitDiverged, DegenerateCurve, SolverFailure, InsufficientPoints,
             OutOfRange, QuadratureFailure, UndefinedThreshold,
             DegenerateDesign, AllTied)
_EXIT_TRAINING = (TrainingFailure, NonFiniteState)


def _exit_code(exc: CapmeterError) -> int:
    if isinstance(exc, _EXIT_FIT):
        return 4
    if isinstance(exc, _EXIT_TRAINING):
        return 3
    return 2


def _fmt6(value) -> str:
    """Display rounding for printed oracle values."""
    return str(round(float(value), 6))


# ---------------------------------------------------------------------------
# flag parsing helpers
# ---------------------------------------------------------------------------

def parse_grid(text: str):
    """Sample-size grid: ``lo:hi:Klog`` (K log-spaced, deduplicated) or a
    comma-separated list of integers."""
    match = re.fullmatch(r"(\d+):(\d+):(\d+)log", text)
    if match:
        lo, hi, count = (int(g) for g in match.groups())
        if not (1 <= lo < hi) or count < 2:
            raise ConfigError(f"bad grid bounds in {text!r}")
        grid = np.unique(np.rint(np.geomspace(lo, hi, count)).astype(np.int64))
        return tuple(int(n) for n in grid)
    try:
        grid = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(
            f"grid {text!r} is neither lo:hi:Klog nor a comma list of integers")
    return grid


def _parse_kv(text: str) -> dict:
    out = {}
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _parse_floats(text: str):
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"expected a comma list of numbers, got {text!r}")


def _parse_ints(text: str):
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"expected a comma list of integers, got {text!r}")


def _resolve_jobs(args) -> int:
    if args.jobs is not None:
        jobs = args.jobs
    else:
        try:
            jobs = int(os.environ.get("CAPMETER_JOBS", "1"))
        except ValueError:
            raise ConfigError("CAPMETER_JOBS must be an integer")
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    return jobs


def _synthetic_dataset(spec_text: str, rows: int):
    spec = _parse_kv(spec_text)
    known = {"d", "kappa", "m", "hidden", "seed"}
    unknown = set(spec) - known
    if unknown:
        raise ConfigError(f"unknown synthetic keys: {sorted(unknown)}")
    if "d" not in spec:
        raise ConfigError("synthetic spec needs d=<dim>")
    config = SyntheticConfig(d=int(spec["d"]), kappa=float(spec.get("kappa", 0.0)),
                             teacher_hidden=int(spec.get("hidden", 1000)),
                             m_classes=int(spec.get("m", 2)),
                             seed=int(spec.get("seed", 0)))
    dataset = gen_synthetic(config, rows)
    label = (f"synthetic-d{config.d}-kappa{config.kappa:g}-m{config.m_classes}"
             f"-seed{config.seed}")
    return dataset, label


def _dataset_for(args, rows: int):
    if args.synthetic is not None:
        return _synthetic_dataset(args.synthetic, rows) + ((),)
    if args.data is not None:
        dataset = load_tabular(args.data)
        stem = os.path.splitext(os.path.basename(args.data))[0]
        return dataset, stem, (args.data,)
    raise ConfigError("select a data source with --synthetic or --data")


def _learner_for(args):
    name = args.learner
    if name == "logistic":
        return logistic_learner(l2=args.l2, epochs=args.epochs or 2000,
                                lr=args.lr or 1.0)
    if name == "mlp":
        return mlp_learner(hidden=args.hidden, epochs=args.epochs or 150,
                           lr_max=args.lr or 0.1, batch=args.batch)
    if name == "knn":
        return knn_learner(k=args.k, alpha=args.alpha, sigma=args.sigma)
    raise ConfigError(f"unknown learner {name!r}")


def _config_echo(args) -> dict:
    skip = {"func", "_argv"}
    return {k: v for k, v in sorted(vars(args).items())
            if k not in skip and v is not None}


# ---------------------------------------------------------------------------
# curve file round trip
# ---------------------------------------------------------------------------

def _write_curve(path, curve: EnergyCurve, manifest) -> None:
    lines = [f"# {line}" for line in report.manifest_lines(manifest)]
    lines.append(f"# scale={curve.scale}")
    lines.append(CURVE_HEADER)
    for n, u, se, count in curve.points:
        lines.append(f"{n},{float(u)!r},{float(se)!r},{count}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_curve(path) -> EnergyCurve:
    scale = "nll"
    rows = []
    header_seen = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.startswith("scale="):
                    scale = body[len("scale="):]
                continue
            if not header_seen:
                if line != CURVE_HEADER:
                    raise ParseError(f"expected curve header {CURVE_HEADER!r}",
                                     line=lineno)
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"expected 4 fields, got {len(parts)}",
                                 line=lineno)
            try:
                rows.append((int(parts[0]), float(parts[1]), float(parts[2]),
                             int(parts[3])))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno)
    if not header_seen or not rows:
        raise ParseError("curve file has no data rows", line=0)
    rows.sort()
    return EnergyCurve(n=np.array([r[0] for r in rows], dtype=np.float64),
                       u_mean=np.array([r[1] for r in rows]),
                       u_stderr=np.array([r[2] for r in rows]),
                       record_count=np.array([r[3] for r in rows]),
                       scale=scale)


def _load_curve_input(path) -> EnergyCurve:
    """Accept either a record file or a curve summary file."""
    with open(path) as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            first = stripped
            break
        else:
            raise ParseError("file has no content lines", line=0)
    if first == RECORD_HEADER:
        records = ingest_records(path)
        return estimate_avg_energy(records)
    return _read_curve(path)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    grid = parse_grid(args.n_grid)
    config = ProtocolConfig(n_grid=grid, master_seed=args.seed,
                            n_boots=args.boots, k_folds=args.folds,
                            m_seeds=args.seeds)
    jobs = _resolve_jobs(args)
    dataset, label, inputs = _dataset_for(args, max(config.n_grid))
    learner = _learner_for(args)
    result = run_protocol(dataset, learner, config, dataset_id=label,
                          workers=jobs)
    curve = estimate_avg_energy(result.records)
    manifest = report.build_manifest(args._argv, _config_echo(args), args.seed,
                                     inputs)
    comments = report.manifest_lines(manifest)
    comments.append(f"clamp_events = {result.clamp_events}")
    write_records(args.out, result.records, comments=comments)
    _write_curve(args.out + ".curve", curve, manifest)
    print(f"wrote {args.out}: {len(result.records)} records over "
          f"{len(config.n_grid)} sample sizes (clamped {result.clamp_events} terms)")
    return 0


def _sigmoid_section(model, curve):
    n_max = float(curve.n[-1])
    cap = capacity_from_sigmoid(model, n_max)
    stderrs = np.sqrt(np.maximum(np.diag(model.covariance), 0.0))
    try:
        n_star, guidance = freezing_threshold(model, n_current=n_max)
        guidance_tag = guidance.value
        if not np.isfinite(n_star):
            n_star = None
    except UndefinedThreshold:
        n_star, guidance_tag = None, "undefined"
    by_n = []
    for n in curve.n:
        point = capacity_from_sigmoid(model, float(n))
        by_n.append({"n": int(n), "value": point.value, "stderr": point.stderr})
    return {
        "a": model.a, "b": model.b, "c": model.c, "u_inf": model.u_inf,
        "stderr": {"a": float(stderrs[0]), "b": float(stderrs[1]),
                   "c": float(stderrs[2]), "u_inf": float(stderrs[3])},
        "covariance": model.covariance,
        "residual_rms": model.residual_rms,
        "n_star": n_star,
        "guidance": guidance_tag,
        "capacity_at_n_max": {"value": cap.value, "stderr": cap.stderr},
        "capacity_by_n": by_n,
    }


def _poly_section(model, curve):
    n_max = float(curve.n[-1])
    cap = capacity_from_polynomial(model, n_max)
    by_n = []
    for n in curve.n:
        point = capacity_from_polynomial(model, float(n))
        by_n.append({"n": int(n), "value": point.value, "stderr": point.stderr})
    return {
        "degree": model.degree,
        "residual_rms": model.residual_rms,
        "constraints_active": model.constraints_active,
        "capacity_at_n_max": {"value": cap.value, "stderr": cap.stderr},
        "capacity_by_n": by_n,
    }


def cmd_fit(args) -> int:
    curve = _load_curve_input(args.records)
    label = args.label or os.path.splitext(os.path.basename(args.records))[0]
    n_max = float(curve.n[-1])
    sigmoid = poly = None
    sigmoid_model = None
    if args.method in ("sigmoid", "both"):
        sigmoid_model = fit_sigmoid_capacity(curve)
        sigmoid = _sigmoid_section(sigmoid_model, curve)
    if args.method in ("poly", "both"):
        poly = _poly_section(fit_monotone_polynomial(curve), curve)

    payload = {
        "label": label,
        "scale": curve.scale,
        "n": [int(n) for n in curve.n],
        "u_mean": curve.u_mean,
        "u_stderr": curve.u_stderr,
        "record_count": curve.record_count,
        "n_max": int(n_max),
        "params": args.params,
        "sigmoid": sigmoid,
        "poly": poly,
        "c_over_p_percent": None,
    }
    primary = sigmoid if sigmoid is not None else poly
    if args.params is not None:
        if args.params < 1:
            raise ConfigError(f"--params must be >= 1, got {args.params}")
        payload["c_over_p_percent"] = (
            100.0 * primary["capacity_at_n_max"]["value"] / args.params)

    fields = [("label", label), ("scale", curve.scale),
              ("points", len(curve)), ("n_max", int(n_max))]
    if args.params is not None:
        fields.append(("params", args.params))
    if sigmoid is not None:
        for key in ("a", "b", "c", "u_inf"):
            fields.append((f"sigmoid.{key}", sigmoid[key]))
            fields.append((f"sigmoid.{key}_stderr", sigmoid["stderr"][key]))
        fields.append(("sigmoid.residual_rms", sigmoid["residual_rms"]))
        for i, row in enumerate(np.asarray(sigmoid["covariance"])):
            fields.append((f"sigmoid.cov.{i}",
                           " ".join(repr(float(v)) for v in row)))
        fields.append(("sigmoid.n_star",
                       "undefined" if sigmoid["n_star"] is None
                       else sigmoid["n_star"]))
        fields.append(("sigmoid.guidance", sigmoid["guidance"]))
        fields.append(("sigmoid.capacity_at_n_max",
                       sigmoid["capacity_at_n_max"]["value"]))
        fields.append(("sigmoid.capacity_stderr",
                       sigmoid["capacity_at_n_max"]["stderr"]))
    if poly is not None:
        fields.append(("poly.capacity_at_n_max", poly["capacity_at_n_max"]["value"]))
        fields.append(("poly.capacity_stderr", poly["capacity_at_n_max"]["stderr"]))
        fields.append(("poly.residual_rms", poly["residual_rms"]))
        fields.append(("poly.constraints_active", poly["constraints_active"]))
    if payload["c_over_p_percent"] is not None:
        fields.append(("c_over_p", f"{payload['c_over_p_percent']:.2f}%"))

    manifest = report.build_manifest(args._argv, _config_echo(args), "-",
                                     (args.records,))
    out = args.out or label + ".fit"
    report.write_text_report(out + ".txt", fields, manifest)
    report.write_json_report(out + ".json", payload, manifest)
    if args.plot:
        if sigmoid_model is not None:
            dense = np.geomspace(curve.n[0], curve.n[-1], 64)
            fit_u = [energy_from_sigmoid(sigmoid_model, x) for x in dense]
            cap_c = [sigmoid_model.capacity(x) for x in dense]
            energy_panel = (curve.n, curve.u_mean, curve.u_stderr, dense, fit_u)
            capacity_panel = (dense, cap_c)
        else:
            cap_n = [p["n"] for p in poly["capacity_by_n"]]
            cap_c = [p["value"] for p in poly["capacity_by_n"]]
            energy_panel = (curve.n, curve.u_mean, curve.u_stderr, None, None)
            capacity_panel = (cap_n, cap_c)
        report.write_curve_chart(out + ".svg", os.path.basename(out + ".json"),
                                 energy_panel, capacity_panel)
    summary = [f"wrote {out}.txt"]
    if primary is not None:
        summary.append(f"C(N_max) = {_fmt6(primary['capacity_at_n_max']['value'])}")
    if payload["c_over_p_percent"] is not None:
        summary.append(f"C/p = {payload['c_over_p_percent']:.2f}%")
    print("; ".join(summary))
    return 0


def _spectrum_for(args) -> HessianSpectrum:
    if args.spectrum is not None:
        return load_spectrum(args.spectrum)
    if args.lambdas is not None:
        if args.eps is None:
            raise ConfigError("inline spectra need --eps")
        return HessianSpectrum(eigenvalues=_parse_floats(args.lambdas),
                               epsilon=args.eps)
    raise ConfigError("select a spectrum with --spectrum or --lambda")


def cmd_oracle(args) -> int:
    spectrum = _spectrum_for(args)
    printed = False
    if args.exact:
        if args.n is None:
            raise ConfigError("--exact needs --n")
        print(f"capacity_exact {_fmt6(quad_capacity_exact(spectrum, args.n))}")
        printed = True
    if args.hm:
        print(f"capacity_hm {_fmt6(quad_capacity_hm(spectrum))}")
        printed = True
    if args.dim_at is not None:
        for n in _parse_ints(args.dim_at):
            print(f"effective_dim@{n} {pacbayes_effective_dim(spectrum, n)}")
        printed = True
    if args.kappa is not None or args.dist2 is not None:
        if args.kappa is None or args.dist2 is None or args.n is None:
            raise ConfigError("the bound needs --kappa, --dist2 and --n")
        value = pacbayes_bound(spectrum, args.n, args.kappa, args.dist2)
        print(f"pacbayes_bound {_fmt6(value)}")
        printed = True
    if not printed:
        raise ConfigError(
            "nothing to compute: pass --exact, --hm, --dim-at, or --kappa/--dist2")
    return 0


def _capacity_lookup(report_data: dict) -> dict:
    section = report_data.get("sigmoid") or report_data.get("poly")
    if not section:
        raise ConfigError(
            f"report {report_data.get('label')!r} has no fitted capacity section")
    return {int(p["n"]): float(p["value"]) for p in section["capacity_by_n"]}


def cmd_compare(args) -> int:
    reports = []
    for path in args.reports:
        with open(path) as fh:
            reports.append(json.load(fh))
    labels = [r.get("label", f"model-{i}") for i, r in enumerate(reports)]
    caps = [_capacity_lookup(r) for r in reports]
    losses = [{int(n): float(u) for n, u in zip(r["n"], r["u_mean"])}
              for r in reports]
    shared = sorted(set.intersection(*(set(c) for c in caps)))
    if not shared:
        raise ConfigError("fit reports have no overlapping sample sizes")

    fields = [("models", len(reports)),
              ("labels", " ".join(labels)),
              ("shared_n", ",".join(str(n) for n in shared))]
    tau_by_n = {}
    for n in shared:
        cap_vec = [c[n] for c in caps]
        loss_vec = [l[n] for l in losses]
        try:
            tau = kendall_tau(cap_vec, loss_vec)
        except AllTied:
            tau = None
        tau_by_n[n] = tau
        fields.append((f"tau@{n}", "tied" if tau is None else tau))

    points = [(c[n], l[n]) for c, l in zip(caps, losses) for n in shared]
    regression = None
    if len(points) >= 3:
        try:
            slope, intercept, p_value = capacity_loss_regression(points)
            regression = {"slope": slope, "intercept": intercept,
                          "p_value": p_value}
            fields.extend([("regression.slope", slope),
                           ("regression.intercept", intercept),
                           ("regression.p_value", p_value)])
        except DegenerateDesign:
            fields.append(("regression", "refused: capacities all equal"))
    else:
        print("warning: regression refused, needs >= 3 (model, N) points",
              file=sys.stderr)
        fields.append(("regression", "refused: fewer than 3 points"))

    n_rank = shared[-1]
    order = sorted(range(len(reports)), key=lambda i: caps[i][n_rank])
    ranked = []
    for rank, i in enumerate(order, start=1):
        ranked.append({"rank": rank, "label": labels[i],
                       "capacity": caps[i][n_rank], "loss": losses[i][n_rank]})
        fields.append((f"rank.{rank}",
                       f"{labels[i]} capacity={_fmt6(caps[i][n_rank])} "
                       f"loss={_fmt6(losses[i][n_rank])}"))

    payload = {"labels": labels, "shared_n": shared,
               "tau_by_n": {str(n): tau_by_n[n] for n in shared},
               "regression": regression, "ranked_at_n": n_rank,
               "ranked": ranked}
    manifest = report.build_manifest(args._argv, _config_echo(args), "-",
                                     tuple(args.reports))
    report.write_text_report(args.out + ".txt", fields, manifest)
    report.write_json_report(args.out + ".json", payload, manifest)
    for key, value in fields:
        print(f"{key} {report.format_number(value)}")
    return 0


def cmd_sgld(args) -> int:
    if args.learner not in ("quadratic", "logistic", "mlp"):
        raise ConfigError(f"learner not differentiable: {args.learner}")
    schedule = _parse_ints(args.schedule)
    config = SgldConfig(step_size=args.step, n_schedule=schedule,
                        chains=args.chains, equilibration_epochs=args.equil,
                        samples_per_window=args.samples, batch_size=args.batch,
                        prior=PriorKind(args.prior), prior_eps=args.prior_eps,
                        seed=args.seed)
    rows = max(schedule) + args.heldout_rows
    inputs = ()
    if args.learner == "quadratic":
        if args.lambdas is None:
            raise ConfigError("quadratic energy needs --lambda")
        energy = QuadraticEnergy(_parse_floats(args.lambdas))
        dataset = RowCount(rows)
        label = f"quadratic-p{energy.dim}"
    else:
        if args.synthetic is not None:
            dataset, label = _synthetic_dataset(args.synthetic, rows)
        elif args.data is not None:
            dataset = load_tabular(args.data)
            label = os.path.splitext(os.path.basename(args.data))[0]
            inputs = (args.data,)
        else:
            raise ConfigError("select a data source with --synthetic or --data")
        if args.learner == "logistic":
            energy = LogisticEnergy(dataset)
        else:
            energy = MlpEnergy(dataset, hidden=args.hidden)

    result = run_incremental_protocol(energy, dataset, config, dataset_id=label)
    for failure in result.failures:
        print(f"warning: chain {failure.chain} failed at N={failure.sample_size}: "
              f"{failure.detail}", file=sys.stderr)

    manifest = report.build_manifest(args._argv, _config_echo(args), args.seed,
                                     inputs)
    comments = report.manifest_lines(manifest)
    comments.append("scale=probability-complement")
    write_records(args.out, result.records, comments=comments)

    fields = [("label", label), ("scale", "probability-complement"),
              ("schedule", ",".join(str(n) for n in schedule)),
              ("surviving_chains", config.chains - len(result.failures))]
    for n, u, se, _ in result.curve.points:
        fields.append((f"u@{n}", u))
        fields.append((f"u_stderr@{n}", se))
    for cap in result.capacities:
        fields.append((f"capacity@{int(cap.at_n)}", cap.value))
        fields.append((f"capacity_stderr@{int(cap.at_n)}", cap.stderr))
    report.write_text_report(args.out + ".capacities", fields, manifest)
    for cap in result.capacities:
        print(f"C({int(cap.at_n)}) = {_fmt6(cap.value)} +/- {_fmt6(cap.stderr)}")
    print(f"wrote {args.out}: {len(result.records)} records over "
          f"{len(schedule)} schedule points")
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------

def _add_data_flags(sub) -> None:
    sub.add_argument("--synthetic", help="synthetic spec, e.g. d=20,kappa=1")
    sub.add_argument("--data", help="tabular CSV path")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="capmeter",
                            description="learning-capacity measurement tools")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    run = subs.add_parser("run", help="run the resampling protocol")
    _add_data_flags(run)
    run.add_argument("--learner", required=True,
                     choices=["logistic", "mlp", "knn"])
    run.add_argument("--n-grid", required=True,
                     help="lo:hi:Klog or comma list")
    run.add_argument("--boots", type=int, default=4)
    run.add_argument("--folds", type=int, default=5)
    run.add_argument("--seeds", type=int, default=5)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--jobs", type=int, default=None,
                     help="worker threads (default: CAPMETER_JOBS or 1)")
    run.add_argument("--l2", type=float, default=0.0)
    run.add_argument("--epochs", type=int, default=None)
    run.add_argument("--lr", type=float, default=None)
    run.add_argument("--hidden", type=int, default=16)
    run.add_argument("--batch", type=int, default=64)
    run.add_argument("--k", type=int, default=10)
    run.add_argument("--alpha", type=float, default=1.0)
    run.add_argument("--sigma", type=float, default=1.0)
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)

    fit = subs.add_parser("fit", help="fit capacity estimators to a curve")
    fit.add_argument("records", help="record file or curve summary")
    fit.add_argument("--method", choices=["sigmoid", "poly", "both"],
                     default="both")
    fit.add_argument("--params", type=int, default=None,
                     help="parameter count for the C/p line")
    fit.add_argument("--label", default=None)
    fit.add_argument("--plot", action="store_true")
    fit.add_argument("--out", default=None)
    fit.set_defaults(func=cmd_fit)

    oracle = subs.add_parser("oracle", help="closed-form quadratic values")
    oracle.add_argument("--spectrum", help="spectrum file")
    oracle.add_argument("--lambda", dest="lambdas",
                        help="inline eigenvalues, comma separated")
    oracle.add_argument("--eps", type=float, default=None)
    oracle.add_argument("--n", type=int, default=None)
    oracle.add_argument("--exact", action="store_true",
                        help="exact capacity at --n")
    oracle.add_argument("--hm", action="store_true",
                        help="harmonic-mean large-N capacity")
    oracle.add_argument("--dim-at", default=None,
                        help="effective dimension at these N (comma list)")
    oracle.add_argument("--kappa", type=float, default=None)
    oracle.add_argument("--dist2", type=float, default=None)
    oracle.set_defaults(func=cmd_oracle)

    compare = subs.add_parser("compare", help="rank fitted models")
    compare.add_argument("reports", nargs="+",
                         help="two or more fit .json reports")
    compare.add_argument("--out", default="compare")
    compare.set_defaults(func=cmd_compare)

    sgld = subs.add_parser("sgld", help="Langevin incremental protocol")
    _add_data_flags(sgld)
    sgld.add_argument("--learner", required=True,
                      help="quadratic, logistic, or mlp")
    sgld.add_argument("--schedule", required=True,
                      help="comma list of sample sizes")
    sgld.add_argument("--step", type=float, required=True)
    sgld.add_argument("--chains", type=int, default=10)
    sgld.add_argument("--equil", type=int, default=20,
                      help="equilibration epochs per window")
    sgld.add_argument("--samples", type=int, default=10,
                      help="samples per window")
    sgld.add_argument("--batch", type=int, default=64)
    sgld.add_argument("--prior", choices=["gaussian", "uniform"],
                      default="gaussian")
    sgld.add_argument("--prior-eps", type=float, default=1.0)
    sgld.add_argument("--lambda", dest="lambdas", default=None,
                      help="quadratic energy eigenvalues")
    sgld.add_argument("--hidden", type=int, default=16)
    sgld.add_argument("--heldout-rows", type=int, default=256)
    sgld.add_argument("--seed", type=int, default=0)
    sgld.add_argument("--out", required=True)
    sgld.set_defaults(func=cmd_sgld)
    return parser


def main(argv=None) -> int:
    argv_list = list(argv) if argv is not None else sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv_list)
    except SystemExit as exc:
        return int(exc.code or 0)
    args._argv = ["capmeter"] + argv_list
    try:
        return args.func(args)
    except CapmeterError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
