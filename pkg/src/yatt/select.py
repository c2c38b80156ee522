"""Greedy forward selection of weather variables.

Each step trains one model per remaining candidate added to the already
selected set and keeps the candidate with the lowest RMSE.
"""
import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import model
from .model import WEATHER_VARS
from .seeding import derive_seed

METRIC_SETS = ("validation", "test")
REGIONS = {"all": None, "north": (0, 4), "south": (4, 8)}
TRACE_HEADER = ["step", "variable", "rmse", "metric_set", "region"]


class SearchAborted(RuntimeError):
    """Evaluator failure; ``trace`` holds the steps completed before it."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class GreedyTrace:
    pool: tuple
    metric_set: str = "validation"
    region: str = "all"
    steps: list = field(default_factory=list)  # (variable, rmse at selection)
    log: list = field(default_factory=list)  # (subset, rmse) for every evaluation

    @property
    def order(self):
        return [v for v, _ in self.steps]

    def check(self):
        if len(set(self.order)) != len(self.order) or len(self.order) > len(WEATHER_VARS):
            raise ValueError(f"trace variables must be unique and at most 7: {self.order}")
        if not set(self.pool) <= set(WEATHER_VARS):
            raise ValueError(f"pool {self.pool} is not a subset of {WEATHER_VARS}")
        return self


def greedy_search(pool, evaluator, metric_set="validation", tie_order=WEATHER_VARS, region="all"):
    """Forward selection over ``pool`` with ``evaluator(subset) -> rmse``.

    ``subset`` is a tuple of variables in selection order. Exact ties go to the
    candidate earliest in ``tie_order``.
    """
    pool = tuple(pool)
    if not pool:
        raise ValueError("greedy_search: empty candidate pool")
    if metric_set not in METRIC_SETS:
        raise ValueError(f"metric_set must be one of {METRIC_SETS}, got {metric_set!r}")
    rank = {v: i for i, v in enumerate(tie_order)}
    missing = [v for v in pool if v not in rank]
    if missing or len(set(pool)) != len(pool):
        raise ValueError(f"pool must hold distinct variables from the tie order, got {pool}")
    trace = GreedyTrace(pool, metric_set, region)
    remaining = sorted(pool, key=rank.__getitem__)
    selected = ()
    while remaining:
        best = None
        for cand in remaining:
            subset = selected + (cand,)
            try:
                err = float(evaluator(subset))
            except Exception as exc:
                raise SearchAborted(f"evaluator failed on {subset}: {exc}", trace) from exc
            trace.log.append((subset, err))
            if best is None or err < best[1]:
                best = (cand, err)
        selected += (best[0],)
        remaining.remove(best[0])
        trace.steps.append(best)
    return trace


def region_mask(feats, region):
    """Records of a maturity-group region; the boundary group 4 belongs to both."""
    if region not in REGIONS:
        raise ValueError(f"region must be one of {tuple(REGIONS)}, got {region!r}")
    bounds = REGIONS[region]
    if bounds is None:
        return np.ones(len(feats), dtype=bool)
    mg = feats.mg_raw
    return (mg >= bounds[0]) & (mg <= bounds[1])


def model_evaluator(base_cfg, split, metric_set="validation", seed=0, region="all"):
    """Evaluator that retrains ``base_cfg`` from scratch on each variable subset.

    Every evaluation uses a seed derived from the master seed and the subset,
    so results do not depend on evaluation order.
    """
    part = split.val if metric_set == "validation" else split.test
    if len(part) == 0:
        raise ValueError(f"greedy: the {metric_set} split is empty")

    def evaluate(subset):
        enc = dataclasses.replace(base_cfg.encoder)
        cfg = dataclasses.replace(base_cfg, encoder=enc, use_weather=True, weather_vars=tuple(subset))
        cfg.encoder.input_dim = cfg.expected_input_dim()
        sub_seed = derive_seed(seed, "greedy", region, *subset)
        weights, _ = model.train(cfg, split, seed=sub_seed)
        pred = model.predict(weights, cfg, part, split.scaler)
        return float(np.sqrt(np.mean((pred - part.yield_bu) ** 2)))

    return evaluate


def write_trace_csv(trace, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        protocol = "test RMSE" if trace.metric_set == "test" else "validation RMSE"
        fh.write(f"# selection metric: {protocol}; region: {trace.region}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for i, (var, err) in enumerate(trace.steps, start=1):
            w.writerow([i, var, f"{err:.6f}", trace.metric_set, trace.region])
