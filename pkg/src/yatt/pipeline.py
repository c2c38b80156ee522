"""Ingestion, weather join, downsampling, scaling and splitting.

Days are indexed 0..213 from April 1. Non-daily granularities use only the
first 210 days, cut into windows of 7, 14 or 30 days.
"""
import csv
import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .model import WEATHER_VARS

log = logging.getLogger(__name__)

N_DAYS = 214
USED_DAYS = 210
WINDOW = {"daily": 1, "weekly": 7, "biweekly": 14, "monthly": 30}
# per-variable aggregation used when downsampling (precipitation is averaged)
AGGREGATION = {
    "ADNI": "mean", "AP": "mean", "ARH": "mean", "MDNI": "max",
    "MaxSur": "max", "MinSur": "min", "AvgSur": "mean",
}
PERFORMANCE_HEADER = ("record_id", "year", "location_id", "genotype_id", "maturity_group", "yield_bu_ac")
WEATHER_HEADER = ("location_id", "year", "day_index") + WEATHER_VARS


class DataError(ValueError):
    """Problem with input data; message carries file and line when known."""


def steps_for(granularity):
    if granularity not in WINDOW:
        raise ValueError(f"granularity must be one of {tuple(WINDOW)}, got {granularity!r}")
    w = WINDOW[granularity]
    return N_DAYS if w == 1 else USED_DAYS // w


@dataclass
class PerformanceRecord:
    record_id: str
    year: int
    location_id: str
    genotype_id: str
    maturity_group: int
    yield_bu_ac: float


@dataclass
class WeatherSeries:
    location_id: str
    year: int
    values: np.ndarray  # (days, 7) in WEATHER_VARS order

    def check(self, where=""):
        v = self.values
        if v.shape != (N_DAYS, len(WEATHER_VARS)):
            raise DataError(f"{where}weather series ({self.location_id}, {self.year}) has {v.shape[0]} days, expected {N_DAYS}")
        check_weather_invariants(v, f"{where}({self.location_id}, {self.year})")


def check_weather_invariants(v, label):
    i = {n: k for k, n in enumerate(WEATHER_VARS)}
    problems = []
    if not np.all(np.isfinite(v)):
        problems.append("non-finite value")
    if np.any(v[:, i["MinSur"]] > v[:, i["AvgSur"]]) or np.any(v[:, i["AvgSur"]] > v[:, i["MaxSur"]]):
        problems.append("MinSur <= AvgSur <= MaxSur violated")
    if np.any((v[:, i["ARH"]] < 0) | (v[:, i["ARH"]] > 100)):
        problems.append("ARH outside [0, 100]")
    if np.any(v[:, i["AP"]] < 0):
        problems.append("negative AP")
    if np.any(v[:, i["ADNI"]] < 0) or np.any(v[:, i["MDNI"]] < v[:, i["ADNI"]]):
        problems.append("irradiance negative or MDNI < ADNI")
    if problems:
        raise DataError(f"weather {label}: " + "; ".join(problems))


@dataclass
class SkipEntry:
    line: int
    reason: str
    record_id: str = ""


def parse_performance_csv(path):
    """Parse a performance file; returns ``(records, skipped)``.

    Rows without a yield, with an MG outside 0..8, or with unparseable
    numbers are skipped and reported with their line numbers.
    """
    path = Path(path)
    records, skipped = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c for c in PERFORMANCE_HEADER if c not in header]
        if missing:
            raise DataError(f"{path}:1: missing header columns {missing}")
        col = {c: header.index(c) for c in PERFORMANCE_HEADER}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                skipped.append(SkipEntry(lineno, "too few columns"))
                continue
            get = lambda c: row[col[c]].strip()  # noqa: E731
            rid = get("record_id")
            if get("yield_bu_ac") == "":
                skipped.append(SkipEntry(lineno, "missing yield", rid))
                continue
            try:
                y = float(get("yield_bu_ac"))
            except ValueError:
                skipped.append(SkipEntry(lineno, "unparseable yield", rid))
                continue
            if not math.isfinite(y) or y <= 0:
                skipped.append(SkipEntry(lineno, "non-positive yield", rid))
                continue
            try:
                year = int(get("year"))
            except ValueError:
                skipped.append(SkipEntry(lineno, "unparseable year", rid))
                continue
            try:
                mg = float(get("maturity_group"))
            except ValueError:
                skipped.append(SkipEntry(lineno, "unparseable MG", rid))
                continue
            if not 0 <= mg <= 8:
                skipped.append(SkipEntry(lineno, "MG out of range", rid))
                continue
            if mg != int(mg):
                skipped.append(SkipEntry(lineno, "MG not integer-valued", rid))
                continue
            records.append(PerformanceRecord(rid, year, get("location_id"), get("genotype_id"), int(mg), y))
    return records, skipped


def write_performance_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PERFORMANCE_HEADER)
        for r in records:
            w.writerow([r.record_id, r.year, r.location_id, r.genotype_id, r.maturity_group, f"{r.yield_bu_ac:.3f}"])


def read_weather_csv(path):
    """Weather store ``{(location_id, year): WeatherSeries}`` from a long CSV.

    Day coverage is not checked here (:func:`join_weather` reports it);
    physical invariants are.
    """
    path = Path(path)
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        missing = [c for c in WEATHER_HEADER if c not in header]
        if missing:
            raise DataError(f"{path}:1: missing header columns {missing}")
        col = [header.index(c) for c in WEATHER_HEADER]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                loc = row[col[0]].strip()
                year = int(row[col[1]])
                day = int(row[col[2]])
                vals = [float(row[c]) for c in col[3:]]
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not 0 <= day < N_DAYS:
                raise DataError(f"{path}:{lineno}: day_index {day} outside 0..{N_DAYS - 1}")
            cell = rows.setdefault((loc, year), {})
            if day in cell:
                raise DataError(f"{path}:{lineno}: duplicate day {day} for ({loc}, {year})")
            cell[day] = vals
    store = {}
    for key, days in rows.items():
        order = sorted(days)
        if order != list(range(len(order))):
            raise DataError(f"{path}: ({key[0]}, {key[1]}) has non-contiguous day indices")
        v = np.array([days[d] for d in order], dtype=np.float64)
        check_weather_invariants(v, f"{path} ({key[0]}, {key[1]})")
        store[key] = WeatherSeries(key[0], key[1], v)
    return store


def write_weather_csv(store, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEATHER_HEADER)
        for key in sorted(store):
            s = store[key]
            for d, row in enumerate(s.values):
                w.writerow([s.location_id, s.year, d] + [f"{x:.4f}" for x in row])


def join_weather(records, store):
    """Pair each record with its weather series, reporting every gap at once."""
    gaps = sorted({(r.location_id, r.year) for r in records if (r.location_id, r.year) not in store})
    if gaps:
        raise DataError("no weather series for " + ", ".join(f"({l}, {y})" for l, y in gaps))
    joined = []
    for r in records:
        s = store[(r.location_id, r.year)]
        if s.values.shape[0] != N_DAYS:
            raise DataError(f"weather series ({s.location_id}, {s.year}) has {s.values.shape[0]} days, expected {N_DAYS}")
        joined.append((r, s))
    return joined


def downsample(series, granularity="weekly"):
    """Aggregate a 214-day series to ``(T_x, 7)``.

    Windows cover only the first 210 days; ADNI, AP, ARH and AvgSur are
    averaged (correctly rounded sum divided by the window length), MDNI and MaxSur take the window maximum, MinSur the minimum.
    """
    v = series.values if isinstance(series, WeatherSeries) else np.asarray(series, dtype=np.float64)
    if v.shape != (N_DAYS, len(WEATHER_VARS)):
        raise DataError(f"downsample: series shape {v.shape}, expected ({N_DAYS}, {len(WEATHER_VARS)})")
    w = WINDOW.get(granularity)
    if w is None:
        raise ValueError(f"granularity must be one of {tuple(WINDOW)}, got {granularity!r}")
    if w == 1:
        return v.copy()
    T = steps_for(granularity)
    blocks = v[: T * w].reshape(T, w, -1)
    out = np.empty((T, len(WEATHER_VARS)))
    for k, name in enumerate(WEATHER_VARS):
        agg = AGGREGATION[name]
        col = blocks[:, :, k]
        if agg == "mean":
            # correctly rounded window sum, so results do not depend on summation order
            out[:, k] = [math.fsum(row) / w for row in col.tolist()]
        else:
            out[:, k] = col.max(axis=1) if agg == "max" else col.min(axis=1)
    return out


_STR = "U64"


@dataclass
class Features:
    """Prepared per-record arrays (raw or scaled).

    ``target`` follows ``scaled``; ``yield_bu`` always holds original units.
    """

    record_ids: np.ndarray
    years: np.ndarray
    locations: np.ndarray
    genotypes: np.ndarray
    weather: np.ndarray  # (N, T_x, 7)
    mg: np.ndarray
    cluster: np.ndarray
    target: np.ndarray
    yield_bu: np.ndarray
    mg_raw: np.ndarray
    cluster_raw: np.ndarray
    scaled: bool = False

    def __len__(self):
        return len(self.record_ids)

    @property
    def T_x(self):
        return self.weather.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        kw = {f.name: getattr(self, f.name)[idx] for f in fields(self) if f.name != "scaled"}
        return Features(scaled=self.scaled, **kw)

    def select(self, mask):
        return self.subset(np.flatnonzero(mask))


def prepare(records, store, assignment=None, granularity="weekly"):
    """Join, downsample and stack records into raw :class:`Features`.

    ``assignment`` maps genotype id to cluster id; without it the cluster
    column is zero.
    """
    from .genotype import assign_cluster_feature

    joined = join_weather(records, store)
    cache = {}
    T = steps_for(granularity)
    weather = np.empty((len(joined), T, len(WEATHER_VARS)))
    for i, (r, s) in enumerate(joined):
        key = (s.location_id, s.year)
        if key not in cache:
            cache[key] = downsample(s, granularity)
        weather[i] = cache[key]
    if assignment is not None:
        cluster = np.array([assign_cluster_feature(assignment, r.genotype_id) for r in records], dtype=np.float64)
    else:
        cluster = np.zeros(len(records))
    mg = np.array([r.maturity_group for r in records], dtype=np.float64)
    y = np.array([r.yield_bu_ac for r in records], dtype=np.float64)
    return Features(
        record_ids=np.array([r.record_id for r in records], dtype=_STR),
        years=np.array([r.year for r in records], dtype=np.int64),
        locations=np.array([r.location_id for r in records], dtype=_STR),
        genotypes=np.array([r.genotype_id for r in records], dtype=_STR),
        weather=weather,
        mg=mg,
        cluster=cluster,
        target=y.copy(),
        yield_bu=y,
        mg_raw=mg.copy(),
        cluster_raw=cluster.copy(),
    )


def _fit_range(values):
    lo, hi = float(np.min(values)), float(np.max(values))
    return lo, hi


def _apply(v, lo, hi):
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, 2.0 * (v - lo) / safe - 1.0, 0.0)


def _invert(s, lo, hi):
    return (np.asarray(s) + 1.0) * 0.5 * (hi - lo) + lo


@dataclass
class Scaler:
    """Linear maps sending the training min to -1 and max to +1.

    Constant features map to 0 and are listed in ``constant``. Values outside
    the training range extrapolate linearly (no clamping).
    """

    weather_lo: np.ndarray
    weather_hi: np.ndarray
    static_lo: np.ndarray  # (mg, cluster)
    static_hi: np.ndarray
    target_lo: float
    target_hi: float
    constant: list = field(default_factory=list)

    @classmethod
    def fit(cls, feats):
        if len(feats) == 0:
            raise ValueError("fit_scaler: empty training set")
        if feats.scaled:
            raise ValueError("fit_scaler: features are already scaled")
        w = feats.weather.reshape(-1, feats.weather.shape[-1])
        sc = cls(
            weather_lo=w.min(axis=0),
            weather_hi=w.max(axis=0),
            static_lo=np.array([feats.mg.min(), feats.cluster.min()]),
            static_hi=np.array([feats.mg.max(), feats.cluster.max()]),
            target_lo=float(feats.target.min()),
            target_hi=float(feats.target.max()),
        )
        names = list(WEATHER_VARS) + ["maturity_group", "cluster", "yield"]
        lo = np.concatenate([sc.weather_lo, sc.static_lo, [sc.target_lo]])
        hi = np.concatenate([sc.weather_hi, sc.static_hi, [sc.target_hi]])
        sc.constant = [n for n, a, b in zip(names, lo, hi) if not b > a]
        for n in sc.constant:
            log.warning("feature %s is constant on the training split; it scales to 0", n)
        return sc

    def apply(self, feats):
        if feats.scaled:
            raise ValueError("scaler.apply: features are already scaled")
        out = feats.subset(np.arange(len(feats)))
        out.weather = _apply(feats.weather, self.weather_lo, self.weather_hi)
        out.mg = _apply(feats.mg, self.static_lo[0], self.static_hi[0])
        out.cluster = _apply(feats.cluster, self.static_lo[1], self.static_hi[1])
        out.target = self.apply_target(feats.target)
        out.scaled = True
        return out

    def apply_target(self, y):
        return _apply(np.asarray(y, dtype=np.float64), self.target_lo, self.target_hi)

    def invert_target(self, s):
        return _invert(s, self.target_lo, self.target_hi)

    def apply_weather(self, w):
        return _apply(w, self.weather_lo, self.weather_hi)

    def invert_weather(self, s):
        return _invert(s, self.weather_lo, self.weather_hi)

    def to_dict(self):
        return {
            "weather_lo": [float(x) for x in self.weather_lo],
            "weather_hi": [float(x) for x in self.weather_hi],
            "static_lo": [float(x) for x in self.static_lo],
            "static_hi": [float(x) for x in self.static_hi],
            "target_lo": float(self.target_lo),
            "target_hi": float(self.target_hi),
            "constant": list(self.constant),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            weather_lo=np.array(d["weather_lo"], dtype=np.float64),
            weather_hi=np.array(d["weather_hi"], dtype=np.float64),
            static_lo=np.array(d["static_lo"], dtype=np.float64),
            static_hi=np.array(d["static_hi"], dtype=np.float64),
            target_lo=float(d["target_lo"]),
            target_hi=float(d["target_hi"]),
            constant=list(d.get("constant", [])),
        )


def fit_scaler(train_feats):
    return Scaler.fit(train_feats)


def split_sizes(n, fractions=(0.8, 0.1, 0.1)):
    """Largest-remainder allocation of ``n`` items to the given fractions."""
    exact = [n * f for f in fractions]
    sizes = [int(math.floor(x)) for x in exact]
    rem = n - sum(sizes)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:rem]:
        sizes[i] += 1
    return sizes


@dataclass
class DatasetSplit:
    train: Features
    val: Features
    test: Features
    scaler: Scaler
    indices: dict
    granularity: str = "weekly"

    @property
    def T_x(self):
        return self.train.T_x


def split_indices(n, seed, fractions=(0.8, 0.1, 0.1), groups=None):
    """Seeded shuffle then contiguous cut; with ``groups`` each group is cut separately."""
    if n < 10:
        raise ValueError(f"split: need at least 10 records, got {n}")
    rng = np.random.default_rng(seed)
    if groups is None:
        perm = rng.permutation(n)
        a, b, _ = split_sizes(n, fractions)
        return {"train": np.sort(perm[:a]), "val": np.sort(perm[a : a + b]), "test": np.sort(perm[a + b :])}
    groups = np.asarray(groups)
    parts = {"train": [], "val": [], "test": []}
    for g in sorted(set(groups.tolist())):
        members = np.flatnonzero(groups == g)
        perm = members[rng.permutation(len(members))]
        a, b, _ = split_sizes(len(members), fractions)
        parts["train"].append(perm[:a])
        parts["val"].append(perm[a : a + b])
        parts["test"].append(perm[a + b :])
    return {k: np.sort(np.concatenate(v)) for k, v in parts.items()}


def _granularity_of(T_x):
    for name in WINDOW:
        if steps_for(name) == T_x:
            return name
    return "custom"


def split(feats, seed, fractions=(0.8, 0.1, 0.1), stratify=None, granularity=None):
    """80/10/10 split with the scaler fitted on the training part only.

    ``stratify`` may be ``None``, ``"year"`` or ``"location"``.
    """
    groups = None
    if stratify == "year":
        groups = feats.years
    elif stratify == "location":
        groups = feats.locations
    elif stratify is not None:
        raise ValueError(f"stratify must be None, 'year' or 'location', got {stratify!r}")
    idx = split_indices(len(feats), seed, fractions, groups)
    raw_train = feats.subset(idx["train"])
    scaler = Scaler.fit(raw_train)
    return DatasetSplit(
        train=scaler.apply(raw_train),
        val=scaler.apply(feats.subset(idx["val"])),
        test=scaler.apply(feats.subset(idx["test"])),
        scaler=scaler,
        indices=idx,
        granularity=granularity or _granularity_of(feats.T_x),
    )


def save_features(feats, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for f in fields(feats):
        if f.name != "scaled":
            np.save(directory / f"{f.name}.npy", getattr(feats, f.name), allow_pickle=False)


def load_features(directory, scaled):
    directory = Path(directory)
    kw = {}
    for f in fields(Features):
        if f.name == "scaled":
            continue
        p = directory / f"{f.name}.npy"
        if not p.exists():
            raise DataError(f"prepared archive is missing {p}")
        kw[f.name] = np.load(p, allow_pickle=False)
    return Features(scaled=scaled, **kw)


def save_split(ds, directory):
    """Write a prepared split: one sub-directory of ``.npy`` arrays per part plus ``split.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("train", "val", "test"):
        save_features(getattr(ds, name), directory / name)
    meta = {
        "granularity": ds.granularity,
        "T_x": ds.T_x,
        "sizes": {k: int(len(v)) for k, v in ds.indices.items()},
        "scaler": ds.scaler.to_dict(),
        "indices": {k: [int(i) for i in v] for k, v in ds.indices.items()},
    }
    (directory / "split.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_split(directory):
    directory = Path(directory)
    meta_path = directory / "split.json"
    if not meta_path.exists():
        raise DataError(f"{directory} is not a prepared split (no split.json)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return DatasetSplit(
        train=load_features(directory / "train", True),
        val=load_features(directory / "val", True),
        test=load_features(directory / "test", True),
        scaler=Scaler.from_dict(meta["scaler"]),
        indices={k: np.array(v, dtype=np.int64) for k, v in meta["indices"].items()},
        granularity=meta["granularity"],
    )
