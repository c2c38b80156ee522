"""Metrics and analysis tables in original yield units.

Every table is written as CSV whose first line is a ``# schema:`` comment
naming the columns, followed by a normal header row.
"""
import csv
import dataclasses
from dataclasses import dataclass

import numpy as np

from . import model

ABLATION_ROWS = (
    ("Only MG", dict(use_mg=True, use_cluster=False, use_weather=False)),
    ("Only Cluster", dict(use_mg=False, use_cluster=True, use_weather=False)),
    ("Only Weather Variables", dict(use_mg=False, use_cluster=False, use_weather=True)),
    ("MG, Cluster", dict(use_mg=True, use_cluster=True, use_weather=False)),
    ("MG, Weather Variables", dict(use_mg=True, use_cluster=False, use_weather=True)),
    ("Cluster, Weather Variables", dict(use_mg=False, use_cluster=True, use_weather=True)),
    ("MG, Cluster & Weather Variables", dict(use_mg=True, use_cluster=True, use_weather=True)),
)

MISSING = "NA"


def _pair(pred, actual):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if pred.shape != actual.shape or pred.size == 0:
        raise ValueError(f"need equal nonempty lengths, got {pred.size} and {actual.size}")
    return pred, actual


def rmse(pred, actual):
    pred, actual = _pair(pred, actual)
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def r2(pred, actual):
    pred, actual = _pair(pred, actual)
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("R^2 is undefined when the actual values have zero variance")
    return 1.0 - float(np.sum((pred - actual) ** 2)) / ss_tot


@dataclass
class MetricReport:
    model_id: str
    split: str
    n: int
    rmse: float
    r2: float

    @classmethod
    def of(cls, model_id, split, pred, actual):
        pred, actual = _pair(pred, actual)
        return cls(model_id, split, int(pred.size), rmse(pred, actual), r2(pred, actual))


def _write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# schema: " + ",".join(header) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x, digits=6):
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return MISSING
    return f"{x:.{digits}f}"


METRICS_HEADER = ["model_id", "split", "n", "rmse", "r2"]


def write_metrics_csv(reports, path):
    _write(path, METRICS_HEADER, [[r.model_id, r.split, r.n, _fmt(r.rmse), _fmt(r.r2)] for r in reports])


def ablation_config(base_cfg, flags):
    """Copy of ``base_cfg`` with the given input flags and a matching input width."""
    enc = dataclasses.replace(base_cfg.encoder)
    cfg = dataclasses.replace(base_cfg, encoder=enc, **flags)
    if cfg.static_mode == "none" and cfg.statics:
        cfg.static_mode = "both"
    cfg.encoder.input_dim = cfg.expected_input_dim()
    if cfg.encoder.input_dim == 0:
        # statics only reach the head, so they must also be fed to the encoder
        cfg.static_mode = "both"
        cfg.encoder.input_dim = cfg.expected_input_dim()
    return cfg.validate()


def ablation_grid(base_cfg, split, seeds=(0,), rows=ABLATION_ROWS):
    """Train the base model once per input combination and seed; test metrics per row.

    Row metrics average RMSE and R^2 over ``seeds``.
    """
    out = []
    for label, flags in rows:
        cfg = ablation_config(base_cfg, flags)
        rm, rr = [], []
        for s in seeds:
            weights, _ = model.train(cfg, split, seed=s)
            pred = model.predict(weights, cfg, split.test, split.scaler)
            rm.append(rmse(pred, split.test.yield_bu))
            rr.append(r2(pred, split.test.yield_bu))
        out.append(MetricReport(label, "test", len(split.test), float(np.mean(rm)), float(np.mean(rr))))
    return out


ABLATION_HEADER = ["inputs", "input_dim", "n", "rmse", "r2"]


def write_ablation_csv(reports, base_cfg, path):
    dims = {label: ablation_config(base_cfg, flags).encoder.input_dim for label, flags in ABLATION_ROWS}
    _write(path, ABLATION_HEADER,
           [[r.model_id, dims.get(r.model_id, MISSING), r.n, _fmt(r.rmse), _fmt(r.r2)] for r in reports])


def yearwise_abs_error(years, pred, actual, all_years=None):
    """Per year ``|mean(pred) - mean(actual)|``.

    Returns ``(table, omitted)`` with ``table`` a list of ``(year, n, error)``
    rows and ``omitted`` the years of ``all_years`` without records.
    """
    years = np.asarray(years)
    pred, actual = _pair(pred, actual)
    if years.shape != pred.shape:
        raise ValueError("years must align with predictions")
    table = []
    for y in sorted(set(years.tolist())):
        m = years == y
        table.append((int(y), int(m.sum()), abs(float(pred[m].mean() - actual[m].mean()))))
    present = {t[0] for t in table}
    omitted = sorted({int(y) for y in (() if all_years is None else all_years)} - present)
    return table, omitted


YEARWISE_HEADER = ["year", "n", "abs_error"]


def write_yearwise_csv(table, path):
    _write(path, YEARWISE_HEADER, [[y, n, _fmt(e)] for y, n, e in table])


@dataclass
class AttentionDistribution:
    mg: int
    band: int  # yield band index, 0 is the lowest
    lo: float
    hi: float
    count: int
    curve: np.ndarray | None  # per-step mean attention, None for empty groups


def yield_bands(values, n_bands=4):
    """Band edges at the quantiles of ``values`` (quartiles by default)."""
    return np.quantile(np.asarray(values, dtype=np.float64), np.linspace(0.0, 1.0, n_bands + 1))


def attention_distribution(alphas, mg, actual, mg_filter=None, n_bands=4):
    """Mean attention curve per maturity group and actual-yield band.

    Bands are the quantiles of the actual yields within each maturity group;
    the top edge is inclusive.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    mg = np.asarray(mg)
    actual = np.asarray(actual, dtype=np.float64)
    if alphas.ndim != 2 or alphas.shape[0] != mg.shape[0] or mg.shape != actual.shape:
        raise ValueError("attention maps, maturity groups and yields must align")
    groups = sorted(set(int(g) for g in mg.tolist()))
    if mg_filter is not None:
        groups = [g for g in groups if g in set(int(x) for x in mg_filter)]
    out = []
    for g in groups:
        in_g = mg == g
        edges = yield_bands(actual[in_g], n_bands) if in_g.any() else np.zeros(n_bands + 1)
        band = np.clip(np.searchsorted(edges, actual, side="right") - 1, 0, n_bands - 1)
        for b in range(n_bands):
            m = in_g & (band == b)
            curve = alphas[m].mean(axis=0) if m.any() else None
            out.append(AttentionDistribution(g, b, float(edges[b]), float(edges[b + 1]), int(m.sum()), curve))
    return out


def write_attention_csv(dists, T_x, path):
    header = ["mg", "band", "yield_lo", "yield_hi", "count"] + [f"alpha_{t}" for t in range(T_x)]
    rows = []
    for d in dists:
        curve = [MISSING] * T_x if d.curve is None else [_fmt(a, 9) for a in d.curve]
        rows.append([d.mg, d.band, _fmt(d.lo, 3), _fmt(d.hi, 3), d.count] + curve)
    _write(path, header, rows)


@dataclass
class HeatmapCell:
    mg: int
    cluster: int
    n_test: int
    rmse: float | None  # None marks a cell without test records
    n_train: int
    n_locations: int

    @property
    def ratio(self):
        return self.n_train / self.n_locations if self.n_locations else None


def availability_heatmap(train_feats, test_feats, pred):
    """Test RMSE and training density per (maturity group, cluster) cell."""
    pred, actual = _pair(pred, test_feats.yield_bu)
    keys = sorted(set(zip(train_feats.mg_raw.astype(int).tolist(), train_feats.cluster_raw.astype(int).tolist()))
                  | set(zip(test_feats.mg_raw.astype(int).tolist(), test_feats.cluster_raw.astype(int).tolist())))
    cells = []
    for g, c in keys:
        tm = (test_feats.mg_raw == g) & (test_feats.cluster_raw == c)
        rm = (train_feats.mg_raw == g) & (train_feats.cluster_raw == c)
        err = rmse(pred[tm], actual[tm]) if tm.any() else None
        cells.append(HeatmapCell(g, c, int(tm.sum()), err, int(rm.sum()), len(set(train_feats.locations[rm].tolist()))))
    return cells


HEATMAP_HEADER = ["mg", "cluster", "n_test", "test_rmse", "n_train", "n_train_locations", "train_ratio"]


def write_heatmap_csv(cells, path):
    _write(path, HEATMAP_HEADER, [
        [c.mg, c.cluster, c.n_test, _fmt(c.rmse), c.n_train, c.n_locations, _fmt(c.ratio)] for c in cells
    ])
