"""Command-line runner: ``yatt <command> [--config run.yaml] [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""
import argparse
import csv
import dataclasses
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import baselines, checkpoint, evaluation, genotype, model, pipeline, select, synth
from .model import ConfigError, NumericError, WEATHER_VARS
from .numcore import ShapeError
from .seeding import derive_seed

log = logging.getLogger("yatt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

PATH_KEYS = ("data_dir", "performance", "weather", "correlation", "assignment", "split", "checkpoint", "out")


def _section(cls, d, name):
    d = dict(d or {})
    unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from None


@dataclass
class DataSection:
    granularity: str = "weekly"
    fractions: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    stratify: str | None = None
    clusters: int = 5


@dataclass
class SynthSection:
    locations: int = 100
    years: int = 13
    genotypes: int = 200
    trials: int = 4


@dataclass
class LassoSection:
    n_lambdas: int = 12
    ratio: float = 1e-4


@dataclass
class GreedySection:
    pool: list = field(default_factory=lambda: list(WEATHER_VARS))
    region: str = "all"
    select_on_test: bool = False


@dataclass
class EvaluateSection:
    ablation: bool = False
    ablation_seeds: list = field(default_factory=lambda: [0])
    yield_bands: int = 4
    attention_mg: list | None = None


@dataclass
class RunConfig:
    seed: int = 0
    paths: dict = field(default_factory=dict)
    data: DataSection = field(default_factory=DataSection)
    model: dict = field(default_factory=dict)  # ModelConfig fields; input_dim and T_x are derived
    forest: baselines.ForestParams = field(default_factory=baselines.ForestParams)
    lasso: LassoSection = field(default_factory=LassoSection)
    greedy: GreedySection = field(default_factory=GreedySection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    synth: SynthSection = field(default_factory=SynthSection)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
        paths = dict(d.get("paths") or {})
        bad = set(paths) - set(PATH_KEYS)
        if bad:
            raise ConfigError(f"unknown keys in 'paths': {sorted(bad)}")
        cfg = cls(
            seed=int(d.get("seed", 0)),
            paths=paths,
            data=_section(DataSection, d.get("data"), "data"),
            model=dict(d.get("model") or {}),
            forest=_section(baselines.ForestParams, d.get("forest"), "forest"),
            lasso=_section(LassoSection, d.get("lasso"), "lasso"),
            greedy=_section(GreedySection, d.get("greedy"), "greedy"),
            evaluate=_section(EvaluateSection, d.get("evaluate"), "evaluate"),
            synth=_section(SynthSection, d.get("synth"), "synth"),
        )
        model.ModelConfig.from_dict({k: v for k, v in cfg.model.items()})  # rejects unknown model keys
        return cfg

    def to_dict(self):
        return dataclasses.asdict(self)

    def model_config(self, T_x):
        """ModelConfig with the encoder width and length derived from the flags and data."""
        d = dict(self.model)
        enc = dict(d.pop("encoder", {}) or {})
        cfg = model.ModelConfig.from_dict(d)
        if cfg.statics and cfg.static_mode == "none":
            raise ConfigError("maturity group / cluster enabled but static_mode is 'none'")
        enc.setdefault("input_dim", cfg.expected_input_dim())
        enc.setdefault("T_x", T_x)
        if enc["T_x"] != T_x:
            raise ConfigError(f"model.encoder.T_x={enc['T_x']} but the prepared data has T_x={T_x}")
        cfg.encoder = model.lstm.EncoderConfig(**enc)
        cfg.seed = self.seed
        return cfg.validate()


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return RunConfig.from_dict(raw)


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _path(rc, args, key, required=True):
    v = getattr(args, key, None)
    if v is None:
        v = rc.paths.get(key)
    if v is None and key in ("performance", "weather", "correlation") and rc.paths.get("data_dir"):
        v = str(Path(rc.paths["data_dir"]) / f"{key}.csv")
    if v is None and required:
        raise UsageError(f"--{key.replace('_', '-')} is required (or set paths.{key} in the config)")
    return Path(v) if v is not None else None


def _out_dir(rc, args):
    out = _path(rc, args, "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(rc, out, command):
    d = rc.to_dict()
    d["command"] = command
    (out / "config.resolved.yaml").write_text(yaml.safe_dump(d, sort_keys=True), encoding="utf-8")


def _apply_overrides(rc, args):
    if getattr(args, "seed", None) is not None:
        rc.seed = args.seed
    for key, target in (
        ("granularity", (rc.data, "granularity")),
        ("stratify", (rc.data, "stratify")),
        ("k", (rc.data, "clusters")),
        ("region", (rc.greedy, "region")),
        ("locations", (rc.synth, "locations")),
        ("years", (rc.synth, "years")),
        ("genotypes", (rc.synth, "genotypes")),
        ("trials", (rc.synth, "trials")),
        ("n_trees", (rc.forest, "n_trees")),
    ):
        v = getattr(args, key, None)
        if v is not None:
            setattr(target[0], target[1], v)
    if getattr(args, "select_on_test", False):
        rc.greedy.select_on_test = True
    if getattr(args, "ablation", False):
        rc.evaluate.ablation = True
    for key in ("kind", "epochs", "learning_rate", "batch_size"):
        v = getattr(args, key, None)
        if v is not None:
            rc.model[key] = v
    return rc


# commands


def cmd_generate_data(rc, args):
    out = _out_dir(rc, args)
    s = rc.synth
    data = synth.synthesize(s.locations, s.years, s.genotypes, s.trials, seed=derive_seed(rc.seed, "generate-data"))
    for p in data.write(out):
        print(p)
    _echo_config(rc, out, "generate-data")


def cmd_cluster(rc, args):
    corr = genotype.read_correlation_csv(_path(rc, args, "correlation"))
    asg = genotype.cluster_genotypes(corr, rc.data.clusters, seed=derive_seed(rc.seed, "cluster", "kmeans"))
    out = _out_dir(rc, args)
    genotype.write_assignment_csv(asg, out / "assignment.csv")
    _echo_config(rc, out, "cluster")
    print(f"{len(asg.labels)} genotypes in {asg.k} clusters, inertia {asg.inertia:.6f}")


def cmd_prepare(rc, args):
    records, skipped = pipeline.parse_performance_csv(_path(rc, args, "performance"))
    for s in skipped:
        log.warning("skipped line %d (%s): %s", s.line, s.record_id or "?", s.reason)
    store = pipeline.read_weather_csv(_path(rc, args, "weather"))
    a_path = _path(rc, args, "assignment", required=False)
    assignment = genotype.read_assignment_csv(a_path) if a_path else None
    feats = pipeline.prepare(records, store, assignment, rc.data.granularity)
    ds = pipeline.split(feats, derive_seed(rc.seed, "prepare", "split"), tuple(rc.data.fractions),
                        rc.data.stratify, rc.data.granularity)
    out = _out_dir(rc, args)
    pipeline.save_split(ds, out)
    _echo_config(rc, out, "prepare")
    print(f"prepared {len(feats)} records ({len(skipped)} skipped), T_x={ds.T_x}, "
          f"train/val/test={len(ds.train)}/{len(ds.val)}/{len(ds.test)}")


def _load_split(rc, args):
    return pipeline.load_split(_path(rc, args, "split"))


def cmd_train(rc, args):
    ds = _load_split(rc, args)
    cfg = rc.model_config(ds.T_x)
    seed = derive_seed(rc.seed, "train", cfg.kind)
    t0 = time.perf_counter()
    weights, hist = model.train(cfg, ds, seed=seed)
    log.info("trained %s in %.1fs, best epoch %d", cfg.kind, time.perf_counter() - t0, hist.best_epoch + 1)
    out = _out_dir(rc, args)
    checkpoint.save(out / "model.ckpt", weights, cfg, ds.scaler, seed)
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("# schema: epoch,train_loss,val_rmse\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_rmse"])
        for i, loss in enumerate(hist.train_loss):
            v = hist.val_rmse[i] if i < len(hist.val_rmse) else float("nan")
            w.writerow([i + 1, f"{loss:.9f}", f"{v:.6f}"])
    _echo_config(rc, out, "train")
    print(f"checkpoint {out / 'model.ckpt'} ({weights.n_params()} parameters, best epoch {hist.best_epoch + 1})")


def cmd_evaluate(rc, args):
    ds = _load_split(rc, args)
    weights, cfg, scaler, _ = checkpoint.load(_path(rc, args, "checkpoint"))
    if cfg.encoder.T_x != ds.T_x:
        raise ConfigError(f"checkpoint expects T_x={cfg.encoder.T_x}, split has T_x={ds.T_x}")
    out = _out_dir(rc, args)
    reports, preds = [], {}
    for name in ("train", "val", "test"):
        part = getattr(ds, name)
        if len(part) == 0:
            continue
        preds[name] = model.predict(weights, cfg, part, scaler)
        reports.append(evaluation.MetricReport.of(cfg.kind, name, preds[name], part.yield_bu))
    evaluation.write_metrics_csv(reports, out / "metrics.csv")
    table, omitted = evaluation.yearwise_abs_error(ds.test.years, preds["test"], ds.test.yield_bu,
                                                   all_years=np.unique(np.concatenate([ds.train.years, ds.test.years])))
    for y in omitted:
        log.info("year %d has no test records; omitted from yearwise.csv", y)
    evaluation.write_yearwise_csv(table, out / "yearwise.csv")
    cells = evaluation.availability_heatmap(ds.train, ds.test, preds["test"])
    evaluation.write_heatmap_csv(cells, out / "heatmap.csv")
    if rc.evaluate.ablation:
        seeds = [derive_seed(rc.seed, "ablation", s) for s in rc.evaluate.ablation_seeds]
        grid = evaluation.ablation_grid(cfg, ds, seeds)
        evaluation.write_ablation_csv(grid, cfg, out / "ablation.csv")
    _echo_config(rc, out, "evaluate")
    test = next(r for r in reports if r.split == "test")
    print(f"test RMSE {test.rmse:.3f}  R2 {test.r2:.3f}  (n={test.n})")


def _regional(ds, region):
    if region == "all":
        return ds
    parts = {n: getattr(ds, n).select(select.region_mask(getattr(ds, n), region)) for n in ("train", "val", "test")}
    return dataclasses.replace(ds, **parts)


def cmd_greedy(rc, args):
    ds = _regional(_load_split(rc, args), rc.greedy.region)
    metric_set = "test" if rc.greedy.select_on_test else "validation"
    d = dict(rc.model)
    d["use_weather"] = True
    base = RunConfig(seed=rc.seed, model=d).model_config(ds.T_x)
    evaluator = select.model_evaluator(base, ds, metric_set, seed=derive_seed(rc.seed, "greedy"),
                                       region=rc.greedy.region)
    out = _out_dir(rc, args)
    try:
        trace = select.greedy_search(rc.greedy.pool, evaluator, metric_set, region=rc.greedy.region)
    except select.SearchAborted as exc:
        select.write_trace_csv(exc.trace, out / "greedy_trace.csv")
        raise exc.__cause__ from None
    select.write_trace_csv(trace, out / "greedy_trace.csv")
    _echo_config(rc, out, "greedy")
    print(" > ".join(f"{v} ({e:.3f})" for v, e in trace.steps))


def cmd_baseline(rc, args):
    ds = _load_split(rc, args)
    cfg = rc.model_config(ds.T_x)
    flags = dict(use_weather=cfg.use_weather, use_mg=cfg.use_mg, use_cluster=cfg.use_cluster,
                 weather_columns=cfg.weather_columns)
    X = {n: baselines.flatten(getattr(ds, n), **flags) for n in ("train", "val", "test")}
    which = args.which or ["lasso", "forest"]
    reports = []
    if "lasso" in which:
        m, _ = baselines.lasso_select(X["train"], ds.train.target, X["val"], ds.val.target,
                                      rc.lasso.n_lambdas, rc.lasso.ratio)
        pred = ds.scaler.invert_target(m.predict(X["test"]))
        reports.append(evaluation.MetricReport.of("lasso", "test", pred, ds.test.yield_bu))
    if "forest" in which:
        fm = baselines.forest_fit(X["train"], ds.train.target, rc.forest, seed=derive_seed(rc.seed, "baseline", "forest"))
        pred = ds.scaler.invert_target(fm.predict(X["test"]))
        reports.append(evaluation.MetricReport.of("forest", "test", pred, ds.test.yield_bu))
    out = _out_dir(rc, args)
    evaluation.write_metrics_csv(reports, out / "baseline_metrics.csv")
    _echo_config(rc, out, "baseline")
    for r in reports:
        print(f"{r.model_id}: test RMSE {r.rmse:.3f}  R2 {r.r2:.3f}")


def cmd_attention_export(rc, args):
    ds = _load_split(rc, args)
    weights, cfg, _, _ = checkpoint.load(_path(rc, args, "checkpoint"), expect_kind="attention")
    _, alphas = model.predict_scaled(weights, cfg, ds.test)
    dists = evaluation.attention_distribution(alphas, ds.test.mg_raw, ds.test.yield_bu,
                                              rc.evaluate.attention_mg, rc.evaluate.yield_bands)
    out = _out_dir(rc, args)
    evaluation.write_attention_csv(dists, cfg.encoder.T_x, out / "attention_dist.csv")
    _echo_config(rc, out, "attention-export")
    print(f"{len(dists)} attention groups written")


COMMANDS = {
    "generate-data": cmd_generate_data,
    "cluster": cmd_cluster,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "greedy": cmd_greedy,
    "baseline": cmd_baseline,
    "attention-export": cmd_attention_export,
}


def build_parser():
    p = _Parser(prog="yatt", description="Temporal-attention yield models over weather sequences.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_, *paths):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="YAML run config; flags override it")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        for key in paths:
            sp.add_argument("--" + key.replace("_", "-"), dest=key)
        return sp

    sp = add("generate-data", "write a synthetic performance/weather/correlation triplet")
    for k in ("locations", "years", "genotypes", "trials"):
        sp.add_argument(f"--{k}", type=int)
    sp = add("cluster", "k-means cluster ids from a genotype correlation matrix", "correlation")
    sp.add_argument("--k", type=int)
    sp = add("prepare", "join, downsample, split and scale", "data_dir", "performance", "weather", "assignment")
    sp.add_argument("--granularity", choices=tuple(pipeline.WINDOW) + ("daily",))
    sp.add_argument("--stratify", choices=("year", "location"))
    sp = add("train", "train a model on a prepared split", "split")
    sp.add_argument("--kind", choices=model.KINDS)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--learning-rate", dest="learning_rate", type=float)
    sp = add("evaluate", "metrics, year-wise errors and heatmap for a checkpoint", "split", "checkpoint")
    sp.add_argument("--ablation", action="store_true", help="also train the 7-row input ablation grid")
    sp = add("greedy", "greedy forward selection of weather variables", "split")
    sp.add_argument("--select-on-test", dest="select_on_test", action="store_true",
                    help="select on test RMSE instead of validation RMSE")
    sp.add_argument("--region", choices=tuple(select.REGIONS))
    sp.add_argument("--epochs", type=int)
    sp = add("baseline", "LASSO and random-forest baselines", "split")
    sp.add_argument("--which", nargs="+", choices=("lasso", "forest"))
    sp.add_argument("--n-trees", dest="n_trees", type=int)
    add("attention-export", "attention distributions by maturity group and yield band", "split", "checkpoint")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        rc = _apply_overrides(load_config(args.config), args)
        if getattr(args, "data_dir", None):
            rc.paths["data_dir"] = args.data_dir
        COMMANDS[args.command](rc, args)
    except (ConfigError, ShapeError) as exc:
        print(f"yatt {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (pipeline.DataError, checkpoint.CheckpointError, KeyError, OSError, ValueError) as exc:
        print(f"yatt {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"yatt {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
