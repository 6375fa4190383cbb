"""Command-line interface: fit, simulate, eval, diagnose-meanfield.

Every command writes deterministic artifacts: numbers are serialized with
17 significant digits, so rerunning with the same configuration and seeds
reproduces byte-identical files (iteration timings in trace CSVs are the
only wall-clock-dependent fields).

Exit codes: 0 success, 2 configuration or domain error, 3 data format
error (message carries the offending line when known), 4 numeric failure
(message carries the iteration).  ``VI_LOG=debug|info|quiet`` controls
logging verbosity on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .blr_ard import BlrArd, BlrArdConfig, BlrArdState
from .condconj import StepSchedule, svi_fit
from .engine import (
    FitConfig,
    InitStrategy,
    TracePoint,
    cavi_fit,
    init_state,
    meanfield_gaussian_fixed_point,
    write_trace_csv,
)
from .errors import ConfigError, DataFormatError, DomainError, NumericError
from .gmm import (
    DiagGmm,
    DiagGmmConfig,
    DiagGmmState,
    UniGmmConfig,
    UniGmmState,
    UnitVarianceGmm,
    conjugate_elbo_offset,
    conjugate_spec,
    global_param_from_state,
    read_data_csv,
    simulate,
    state_from_global,
)
from .lda import (
    Lda,
    LdaConfig,
    LdaState,
    lda_cavi_fit,
    lda_svi_fit,
    read_uci,
    simulate_corpus,
    write_uci,
)

__all__ = ["main", "RunConfig"]

log = logging.getLogger("meanfield.cli")

MODELS = ("gmm", "gmm-diag", "blr-ard", "lda")
ALGORITHMS = ("cavi", "svi")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _fmt(value):
    return format(float(value), ".17g")


def _json_text(value, indent=0):
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(key))}: {_json_text(v, indent + 1)}"
            for key, v in value.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if len(value) == 0:
            return "[]"
        items = [f"{inner}{_json_text(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _fmt(value)
    if isinstance(value, np.ndarray):
        return _json_text(value.tolist(), indent)
    if value is None:
        return "null"
    return json.dumps(str(value))


def _write_json(path, value):
    Path(path).write_text(_json_text(value) + "\n", encoding="utf-8")


def _write_matrix_csv(path, matrix):
    rows = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(",".join(_fmt(v) for v in row) + "\n")


def _read_matrix_csv(path):
    try:
        return read_data_csv(path)
    except OSError as err:
        raise DataFormatError(f"cannot read {path}: {err.strerror}")


def _read_corpus(path):
    try:
        return read_uci(path)
    except OSError as err:
        raise DataFormatError(f"cannot read {path}: {err.strerror}")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _check_seed(value):
    seed = int(value)
    if not (0 <= seed < 2**64):
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    return seed


def _parse_seeds(text):
    try:
        parts = [int(p) for p in str(text).split(",") if p.strip() != ""]
    except ValueError:
        raise ConfigError("seeds", f"expected comma-separated integers, got {text!r}")
    return [_check_seed(p) for p in parts]


# (field, converter) pairs a fit config file may set; flags override.
_FIT_FILE_FIELDS = {
    "model": str,
    "algorithm": str,
    "data": str,
    "out": str,
    "seed": int,
    "seeds": str,
    "max_iters": int,
    "tol": float,
    "elbo_every": int,
    "heldout_fraction": float,
    "k": int,
    "sigma2": float,
    "a0": float,
    "m0": float,
    "b0": float,
    "alpha0": float,
    "beta0": float,
    "c0": float,
    "d0": float,
    "eta": float,
    "alpha": float,
    "kappa": float,
    "delay": float,
    "scale": float,
    "batch": int,
    "parallel": int,
}


def _read_config_file(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError("config", f"cannot read {path}: {err.strerror}")
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _FIT_FILE_FIELDS:
            raise ConfigError(key, "unknown configuration key")
        try:
            values[key] = _FIT_FILE_FIELDS[key](value.strip())
        except ValueError:
            raise ConfigError(key, f"cannot parse {value.strip()!r}")
    return values


@dataclass(frozen=True)
class RunConfig:
    """Everything a fit run needs, after merging flags and config file."""

    model: str
    algorithm: str
    data: str
    out: str
    seeds: tuple
    max_iters: int
    tol: float
    elbo_every: int
    heldout_fraction: float
    k: object = None
    sigma2: object = None
    a0: object = None
    m0: object = None
    b0: object = None
    alpha0: object = None
    beta0: object = None
    c0: object = None
    d0: object = None
    eta: object = None
    alpha: object = None
    kappa: object = None
    delay: float = 0.0
    scale: float = 1.0
    batch: int = 1
    parallel: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError("model", f"must be one of {', '.join(MODELS)}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", "must be cavi or svi")
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed is required")
        if self.parallel < 1:
            raise ConfigError("parallel", "must be >= 1")


def _build_run_config(args):
    file_cfg = _read_config_file(args.config) if args.config else {}

    def pick(name, default=None):
        value = getattr(args, name, None)
        if value is not None:
            return value
        if name in file_cfg:
            return file_cfg[name]
        return default

    if args.seed is not None and args.seeds is not None:
        raise ConfigError("seeds", "give either --seed or --seeds, not both")
    seeds_text = pick("seeds")
    seed_single = pick("seed")
    if seeds_text is not None and getattr(args, "seeds", None) is None:
        # value came from the file; a flag --seed still overrides it
        if getattr(args, "seed", None) is not None:
            seeds_text = None
    if seeds_text is not None:
        seeds = _parse_seeds(seeds_text)
    elif seed_single is not None:
        seeds = [_check_seed(seed_single)]
    else:
        seeds = [0]

    data = pick("data")
    if data is None:
        raise ConfigError("data", "an input data path is required")
    model = pick("model")
    if model is None:
        raise ConfigError("model", "a model name is required")

    return RunConfig(
        model=model,
        algorithm=pick("algorithm", "cavi"),
        data=data,
        out=pick("out", "."),
        seeds=tuple(seeds),
        max_iters=pick("max_iters", 200),
        tol=pick("tol", 1e-8),
        elbo_every=pick("elbo_every", 1),
        heldout_fraction=pick("heldout_fraction", 0.0),
        k=pick("k"),
        sigma2=pick("sigma2"),
        a0=pick("a0"),
        m0=pick("m0"),
        b0=pick("b0"),
        alpha0=pick("alpha0"),
        beta0=pick("beta0"),
        c0=pick("c0"),
        d0=pick("d0"),
        eta=pick("eta"),
        alpha=pick("alpha"),
        kappa=pick("kappa"),
        delay=pick("delay", 0.0),
        scale=pick("scale", 1.0),
        batch=pick("batch", 1),
        parallel=pick("parallel", 1),
    )


def _require_k(cfg):
    if cfg.k is None:
        raise ConfigError("k", f"required for model {cfg.model}")
    return int(cfg.k)


def _optional_kwargs(**pairs):
    return {name: value for name, value in pairs.items() if value is not None}


def _fit_config(cfg, seed):
    return FitConfig(
        max_iters=int(cfg.max_iters),
        tol=float(cfg.tol),
        seed=int(seed),
        heldout_fraction=float(cfg.heldout_fraction),
        elbo_every=int(cfg.elbo_every),
    )


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _build_fit(cfg):
    """Load data and return ``(fit_one, summarize)``.

    ``fit_one(seed)`` runs a fit; ``summarize(report, seed, out)`` returns
    the model-specific fields of ``fit_<seed>.json`` and may write side
    files for large parameters.
    """
    schedule = None
    if cfg.algorithm == "svi":
        if cfg.model not in ("gmm", "lda"):
            raise ConfigError(
                "algorithm",
                f"svi is implemented for gmm and lda, not {cfg.model}; use cavi",
            )
        if cfg.kappa is None:
            raise ConfigError("kappa", "required when algorithm is svi")
        if float(cfg.heldout_fraction) > 0.0:
            raise ConfigError(
                "heldout_fraction", "held-out monitoring requires algorithm cavi"
            )
        schedule = StepSchedule(
            kappa=float(cfg.kappa), delay=float(cfg.delay), scale=float(cfg.scale)
        )

    if cfg.model == "lda":
        data = _read_corpus(cfg.data)
        config = LdaConfig(
            k=_require_k(cfg), **_optional_kwargs(eta=cfg.eta, alpha=cfg.alpha)
        )
        model = Lda(config)

        if cfg.algorithm == "svi":
            def fit_one(seed):
                return lda_svi_fit(
                    data, config, schedule, _fit_config(cfg, seed), int(cfg.batch)
                )
        else:
            def fit_one(seed):
                return lda_cavi_fit(data, config, _fit_config(cfg, seed))

        def summarize(report, seed, out):
            state = report.model_state
            lambda_csv = f"lambda_{seed}.csv"
            gamma_csv = f"gamma_{seed}.csv"
            _write_matrix_csv(out / lambda_csv, state.lam)
            _write_matrix_csv(out / gamma_csv, state.gamma)
            fields = model.summary_dict(state)
            fields["lambda_csv"] = lambda_csv
            fields["gamma_csv"] = gamma_csv
            return fields

        return fit_one, summarize

    data = _read_matrix_csv(cfg.data)

    if cfg.model == "gmm":
        config = UniGmmConfig(
            k=_require_k(cfg), **_optional_kwargs(sigma2=cfg.sigma2)
        )
        model = UnitVarianceGmm(config)
        if cfg.algorithm == "svi":
            spec = conjugate_spec(config.k, config.sigma2, dim=data.shape[1])
            # the global-local ELBO drops the constant per-observation base
            # measure; add it back so cavi and svi traces are comparable
            offset = conjugate_elbo_offset(data, config.k)

            def fit_one(seed):
                start = init_state(model, data, InitStrategy.DATA_CALIBRATED, seed)
                report = svi_fit(
                    spec,
                    data,
                    schedule,
                    _fit_config(cfg, seed),
                    init=global_param_from_state(start),
                    batch_size=int(cfg.batch),
                )
                trace = [
                    TracePoint(p.iteration, p.elbo + offset, p.elapsed_ms)
                    for p in report.elbo_trace
                ]
                return replace(report, elbo_trace=trace)

            def summarize(report, seed, out):
                state = state_from_global(
                    report.model_state, config.k, data.shape[1]
                )
                return model.summary_dict(state)

        else:
            def fit_one(seed):
                return cavi_fit(model, data, _fit_config(cfg, seed))

            def summarize(report, seed, out):
                return model.summary_dict(report.model_state)

        return fit_one, summarize

    if cfg.model == "gmm-diag":
        config = DiagGmmConfig(
            k=_require_k(cfg),
            **_optional_kwargs(
                a0=cfg.a0, m0=cfg.m0, b0=cfg.b0, alpha0=cfg.alpha0, beta0=cfg.beta0
            ),
        )
        model = DiagGmm(config)
    else:  # blr-ard
        config = BlrArdConfig(
            **_optional_kwargs(a0=cfg.a0, b0=cfg.b0, c0=cfg.c0, d0=cfg.d0)
        )
        model = BlrArd(config)

    def fit_one(seed):
        return cavi_fit(model, data, _fit_config(cfg, seed))

    def summarize(report, seed, out):
        return model.summary_dict(report.model_state)

    return fit_one, summarize


def cmd_fit(cfg):
    fit_one, summarize = _build_fit(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    if cfg.parallel > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.parallel)) as pool:
            reports = list(pool.map(fit_one, cfg.seeds))
    else:
        reports = [fit_one(seed) for seed in cfg.seeds]

    final_elbos = []
    for seed, report in zip(cfg.seeds, reports):
        write_trace_csv(report, out / f"trace_{seed}.csv")
        doc = {
            "model": cfg.model,
            "algorithm": cfg.algorithm,
            "seed": seed,
            "converged": report.converged,
            "iterations_run": report.iterations_run,
            "final_elbo": report.final_elbo,
            "metadata": report.metadata,
        }
        doc.update(summarize(report, seed, out))
        _write_json(out / f"fit_{seed}.json", doc)
        final_elbos.append(report.final_elbo)
        log.info(
            "fit model=%s seed=%d converged=%s iterations=%d elbo=%s",
            cfg.model,
            seed,
            report.converged,
            report.iterations_run,
            _fmt(report.final_elbo),
        )

    _write_json(
        out / "summary.json",
        {
            "model": cfg.model,
            "algorithm": cfg.algorithm,
            "data": cfg.data,
            "seeds": list(cfg.seeds),
            "final_elbos": final_elbos,
            "converged": [r.converged for r in reports],
            "iterations_run": [r.iterations_run for r in reports],
        },
    )
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = _check_seed(args.seed if args.seed is not None else 0)

    if args.model in ("gmm", "gmm-diag"):
        if args.k is None or args.n is None:
            raise ConfigError("k", "simulate for mixtures needs --k and --n")
        data, means, labels = simulate(
            k=int(args.k),
            n=int(args.n),
            seed=seed,
            dim=int(args.dim),
            mean_scale=float(args.mean_scale),
            min_separation=float(args.separation),
        )
        _write_matrix_csv(out / "data.csv", data)
        _write_json(
            out / "truth.json",
            {"means": means.tolist(), "labels": [int(v) for v in labels]},
        )
        log.info("wrote %s and %s", out / "data.csv", out / "truth.json")
    elif args.model == "blr-ard":
        if args.n is None or args.dim is None:
            raise ConfigError("n", "simulate for regression needs --n and --dim")
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(int(args.n), int(args.dim)))
        coef = rng.normal(size=int(args.dim))
        y = x @ coef + float(args.noise) * rng.normal(size=int(args.n))
        _write_matrix_csv(out / "data.csv", np.column_stack([x, y]))
        _write_json(
            out / "truth.json",
            {"coefficients": coef.tolist(), "noise_sd": float(args.noise)},
        )
        log.info("wrote %s and %s", out / "data.csv", out / "truth.json")
    else:  # lda
        if args.k is None:
            raise ConfigError("k", "simulate for lda needs --k")
        corpus, truth = simulate_corpus(
            k=int(args.k),
            num_docs=int(args.docs),
            vocab_size=int(args.vocab),
            doc_length=int(args.doc_length),
            seed=seed,
            disjoint=bool(args.disjoint),
            alpha=float(args.alpha),
            eta=float(args.eta),
        )
        write_uci(corpus, out / "corpus.txt")
        _write_json(
            out / "truth.json",
            {
                "topics": truth["topics"].tolist(),
                "doc_topic": truth["doc_topic"].tolist(),
            },
        )
        log.info("wrote %s and %s", out / "corpus.txt", out / "truth.json")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _load_fit_document(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise DataFormatError(f"cannot read {path}: {err.strerror}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise DataFormatError(f"{path} is not valid JSON: {err}")


def _rebuild(doc, fit_dir):
    """Model handle and state from a fit document."""
    meta = doc.get("metadata", {})
    model_name = doc.get("model")
    if model_name == "gmm":
        m = np.asarray(doc["means"], dtype=float)
        s2 = np.asarray(doc["variances"], dtype=float)
        config = UniGmmConfig(k=m.shape[0], sigma2=float(meta.get("sigma2", 1.0)))
        state = UniGmmState(m, s2, np.zeros((0, m.shape[0])))
        return UnitVarianceGmm(config), state
    if model_name == "gmm-diag":
        m = np.asarray(doc["locations"], dtype=float)
        k = m.shape[0]
        config = DiagGmmConfig(
            k=k,
            **_optional_kwargs(
                a0=meta.get("a0"),
                m0=meta.get("m0"),
                b0=meta.get("b0"),
                alpha0=meta.get("alpha0"),
                beta0=meta.get("beta0"),
            ),
        )
        state = DiagGmmState(
            np.asarray(doc["weight_concentration"], dtype=float),
            m,
            np.asarray(doc["scales"], dtype=float),
            np.asarray(doc["shapes"], dtype=float),
            np.asarray(doc["rates"], dtype=float),
            np.zeros((0, k)),
        )
        return DiagGmm(config), state
    if model_name == "blr-ard":
        config = BlrArdConfig(
            **_optional_kwargs(
                a0=meta.get("a0"),
                b0=meta.get("b0"),
                c0=meta.get("c0"),
                d0=meta.get("d0"),
            ),
            fix_relevance=bool(meta.get("fix_relevance", False)),
        )
        state = BlrArdState(
            np.asarray(doc["coefficients"], dtype=float),
            np.asarray(doc["coefficient_precision"], dtype=float),
            float(doc["noise_shape"]),
            float(doc["noise_rate"]),
            float(doc["relevance_shape"]),
            np.asarray(doc["relevance_rates"], dtype=float),
        )
        return BlrArd(config), state
    if model_name == "lda":
        lam_path = Path(fit_dir) / doc["lambda_csv"]
        lam = _read_matrix_csv(lam_path)
        config = LdaConfig(
            k=lam.shape[0],
            eta=float(meta.get("eta", 0.1)),
            alpha=np.asarray(meta.get("alpha", 0.1), dtype=float),
        )
        state = LdaState(lam, np.zeros((0, lam.shape[0])), ())
        return Lda(config), state
    raise DataFormatError(f"fit document has unknown model {model_name!r}")


def cmd_eval(args):
    fit_path = Path(args.fit)
    doc = _load_fit_document(fit_path)
    model, state = _rebuild(doc, fit_path.parent)

    if doc["model"] == "lda":
        heldout = _read_corpus(args.data)
        if heldout.v != state.lam.shape[1]:
            raise DataFormatError(
                f"held-out vocabulary size {heldout.v} does not match "
                f"fitted vocabulary {state.lam.shape[1]}"
            )
        if len(heldout) == 0 or heldout.total_tokens == 0.0:
            raise DataFormatError("held-out corpus has no tokens")
        count = heldout.total_tokens
        unit = "word"
    else:
        heldout = _read_matrix_csv(args.data)
        if doc["model"] == "blr-ard":
            expected = state.beta.shape[0] + 1
        else:
            expected = state.m.shape[1]
        if heldout.shape[1] != expected:
            raise DataFormatError(
                f"held-out data has {heldout.shape[1]} columns, fit expects {expected}"
            )
        count = heldout.shape[0]
        unit = "point"

    value = model.heldout_log_predictive(state, heldout)
    print(_fmt(value))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "eval.json",
        {
            "fit": str(args.fit),
            "data": str(args.data),
            "heldout_log_predictive": float(value),
            "per": unit,
            "count": count,
        },
    )
    return 0


# ---------------------------------------------------------------------------
# diagnose-meanfield
# ---------------------------------------------------------------------------


def cmd_diagnose_meanfield(args):
    cov = np.array(args.cov, dtype=float).reshape(2, 2)
    mean = np.array(args.mean, dtype=float)
    means, variances = meanfield_gaussian_fixed_point(mean, cov)

    theta = np.linspace(0.0, 2.0 * np.pi, int(args.points))
    circle = np.stack([np.cos(theta), np.sin(theta)])
    target = means[:, None] + 2.0 * (np.linalg.cholesky(cov) @ circle)
    approx = means[:, None] + 2.0 * (np.sqrt(variances)[:, None] * circle)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "diagnose.csv", "w", encoding="utf-8") as handle:
        handle.write("curve,x,y\n")
        for name, pts in (("target", target), ("meanfield", approx)):
            for x, y in pts.T:
                handle.write(f"{name},{_fmt(x)},{_fmt(y)}\n")
    _write_json(
        out / "diagnose.json",
        {
            "mean": mean.tolist(),
            "covariance": cov.tolist(),
            "meanfield_means": means.tolist(),
            "meanfield_variances": variances.tolist(),
        },
    )
    print(_fmt(variances[0]), _fmt(variances[1]))
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="meanfield",
        description="Mean-field variational inference: fits, simulation, diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model and write trace/fit/summary files")
    fit.add_argument("--model", choices=MODELS)
    fit.add_argument("--algorithm", choices=ALGORITHMS)
    fit.add_argument("--data", help="CSV rows (gmm/gmm-diag), CSV rows with a "
                     "trailing response column (blr-ard), or a bag-of-words "
                     "file (lda)")
    fit.add_argument("--out")
    fit.add_argument("--config", help="key = value file; flags override it")
    fit.add_argument("--seed", type=int)
    fit.add_argument("--seeds", help="comma-separated list")
    fit.add_argument("--max-iters", dest="max_iters", type=int)
    fit.add_argument("--tol", type=float)
    fit.add_argument("--elbo-every", dest="elbo_every", type=int)
    fit.add_argument("--heldout-fraction", dest="heldout_fraction", type=float)
    fit.add_argument("--parallel", type=int)
    fit.add_argument("--k", type=int)
    fit.add_argument("--sigma2", type=float)
    fit.add_argument("--a0", type=float)
    fit.add_argument("--m0", type=float)
    fit.add_argument("--b0", type=float)
    fit.add_argument("--alpha0", type=float)
    fit.add_argument("--beta0", type=float)
    fit.add_argument("--c0", type=float)
    fit.add_argument("--d0", type=float)
    fit.add_argument("--eta", type=float)
    fit.add_argument("--alpha", type=float)
    fit.add_argument("--kappa", type=float)
    fit.add_argument("--delay", type=float)
    fit.add_argument("--scale", type=float)
    fit.add_argument("--batch", type=int)

    sim = sub.add_parser("simulate", help="write a synthetic dataset plus truth.json")
    sim.add_argument("--model", choices=MODELS, required=True)
    sim.add_argument("--out", default=".")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--k", type=int)
    sim.add_argument("--n", type=int)
    sim.add_argument("--dim", type=int, default=1)
    sim.add_argument("--separation", type=float, default=0.0)
    sim.add_argument("--mean-scale", dest="mean_scale", type=float, default=5.0)
    sim.add_argument("--noise", type=float, default=0.3)
    sim.add_argument("--docs", type=int, default=100)
    sim.add_argument("--vocab", type=int, default=20)
    sim.add_argument("--doc-length", dest="doc_length", type=int, default=50)
    sim.add_argument("--disjoint", action="store_true")
    sim.add_argument("--alpha", type=float, default=0.5)
    sim.add_argument("--eta", type=float, default=0.1)

    ev = sub.add_parser("eval", help="average held-out log predictive of a fit")
    ev.add_argument("--fit", required=True, help="path to a fit_<seed>.json")
    ev.add_argument("--data", required=True, help="held-out data file")
    ev.add_argument("--out", default=".")

    diag = sub.add_parser(
        "diagnose-meanfield",
        help="mean-field approximation of a 2-d Gaussian: contours and variances",
    )
    diag.add_argument(
        "--cov", type=float, nargs=4, required=True, metavar=("C00", "C01", "C10", "C11")
    )
    diag.add_argument("--mean", type=float, nargs=2, default=[0.0, 0.0])
    diag.add_argument("--points", type=int, default=128)
    diag.add_argument("--out", default=".")

    return parser


def _configure_logging():
    level_name = os.environ.get("VI_LOG", "info").lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO, "quiet": logging.ERROR}
    if level_name not in levels:
        raise ConfigError("VI_LOG", "must be debug, info, or quiet")
    logging.basicConfig(
        level=levels[level_name], stream=sys.stderr, format="%(message)s"
    )


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _configure_logging()
        if args.command == "fit":
            return cmd_fit(_build_run_config(args))
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "eval":
            return cmd_eval(args)
        return cmd_diagnose_meanfield(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DataFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except DomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
