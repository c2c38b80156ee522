"""Synthetic trial generator writing the exact ingestion formats.

Weather is a shared seasonal climatology plus per-(location, year) AR(1)
anomalies; irradiance and temperature anomalies decorrelate within about a
week so that only the planted window carries yield signal. Yield is

    base + MG effect + cluster effect + g(weekly MinSur, ADNI in weeks 18-26) + noise

rescaled so the sample mean and standard deviation match the targets.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import genotype, pipeline
from .model import WEATHER_VARS
from .seeding import rng_for

TARGET_MEAN = 50.745
TARGET_STD = 16.019
NOISE_STD = 6.0
SIGNAL_WEEKS = tuple(range(18, 27))
FIRST_YEAR = 2003

# relative standard deviations of the planted components before calibration
MG_WEIGHT = 1.0
CLUSTER_WEIGHT = 0.55
WEATHER_WEIGHT = 1.8
FAMILY_EFFECT = np.array([-1.6, -0.6, 0.0, 0.7, 1.5])


@dataclass
class SyntheticData:
    records: list
    weather: dict
    correlation: genotype.CorrelationMatrix
    families: np.ndarray  # planted family per genotype (correlation row order)
    components: dict  # per-record planted parts, arrays aligned with records

    def write(self, out_dir):
        """Write performance.csv, weather.csv and correlation.csv; returns their paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = (out / "performance.csv", out / "weather.csv", out / "correlation.csv")
        pipeline.write_performance_csv(self.records, paths[0])
        pipeline.write_weather_csv(self.weather, paths[1])
        genotype.write_correlation_csv(self.correlation, paths[2])
        return paths


def _ar1(rng, shape, phi, sd):
    """Stationary AR(1) noise along the last axis."""
    eps = rng.normal(0.0, sd * np.sqrt(1 - phi * phi), size=shape)
    out = np.empty(shape)
    out[..., 0] = rng.normal(0.0, sd, size=shape[:-1])
    for t in range(1, shape[-1]):
        out[..., t] = phi * out[..., t - 1] + eps[..., t]
    return out


def _weather(rng, n_cells, latitude):
    d = np.arange(pipeline.N_DAYS)
    season = np.sin(np.pi * (d + 20) / 250.0)  # peaks in mid-summer
    avg = 12.0 + 12.0 * season + _ar1(rng, (n_cells, pipeline.N_DAYS), 0.6, 2.5)
    spread_hi = 3.0 + rng.gamma(4.0, 0.8, size=avg.shape)
    spread_lo = 3.0 + rng.gamma(4.0, 0.8, size=avg.shape)
    adni = 180.0 + 70.0 * season + _ar1(rng, (n_cells, pipeline.N_DAYS), 0.5, 35.0)
    adni = np.maximum(adni, 5.0)
    mdni = adni + rng.gamma(3.0, 25.0, size=adni.shape)
    wet = 0.35 + 0.25 * (1.0 - latitude)[:, None]
    rain = rng.random(avg.shape) < wet
    ap = np.where(rain, rng.exponential(0.04, size=avg.shape), 0.0)
    arh = 55.0 + 15.0 * (1.0 - latitude)[:, None] + 10.0 * rain + _ar1(rng, avg.shape, 0.7, 6.0)
    arh = np.clip(arh, 5.0, 100.0)
    cols = {
        "ADNI": adni, "AP": ap, "ARH": arh, "MDNI": mdni,
        "MaxSur": avg + spread_hi, "MinSur": avg - spread_lo, "AvgSur": avg,
    }
    # rounding preserves the ordering invariants and keeps the files exact
    return np.round(np.stack([cols[v] for v in WEATHER_VARS], axis=2), 4)


def weather_effect(weekly):
    """Planted response to weekly MinSur and ADNI in weeks 18-26.

    ``weekly`` is ``(N, 30, 7)`` raw weekly aggregates. The response is a sum
    over the window of a fixed nonlinear function of standardised anomalies.
    """
    w = list(SIGNAL_WEEKS)
    t = weekly[:, w, WEATHER_VARS.index("MinSur")]
    a = weekly[:, w, WEATHER_VARS.index("ADNI")]
    zt = (t - _MINSUR_CLIM[w]) / 2.0
    za = (a - _ADNI_CLIM[w]) / 20.0
    f = -0.8 * zt * zt + 0.5 * zt + 0.9 * np.tanh(za) - 0.4 * zt * za
    return f.sum(axis=1)


def _climatology():
    d = np.arange(pipeline.N_DAYS)
    season = np.sin(np.pi * (d + 20) / 250.0)
    weeks = season[:210].reshape(30, 7)
    # expected weekly minimum of MinSur and mean ADNI, up to constant offsets
    return 12.0 + 12.0 * weeks.mean(axis=1) - 9.0, 180.0 + 70.0 * weeks.mean(axis=1)


_MINSUR_CLIM, _ADNI_CLIM = _climatology()


def mg_effect(mg):
    mg = np.asarray(mg, dtype=np.float64)
    return 1.2 * (mg - 4.0) - 0.45 * (mg - 4.0) ** 2 + 2.0 * np.cos(1.3 * mg)


def _z(v):
    s = v.std()
    return (v - v.mean()) / s if s > 0 else np.zeros_like(v)


def synthesize(locations=100, years=13, genotypes=200, trials=4, seed=0, noise_std=NOISE_STD,
               families=5, jitter=0.03):
    """Generate a complete synthetic trial set held in memory."""
    if min(locations, years, genotypes, trials) < 1:
        raise ValueError("synthesize: all counts must be positive")
    corr, fam = genotype.planted_correlation(genotypes, families, 0.9, 0.1, jitter, seed)
    rng = rng_for(seed, "synth")
    latitude = np.linspace(0.0, 1.0, locations) if locations > 1 else np.array([0.5])
    gen_mg = rng.integers(0, 9, size=genotypes)
    loc_ids = [f"L{i:03d}" for i in range(locations)]
    cells = [(l, FIRST_YEAR + y) for l in range(locations) for y in range(years)]
    cell_lat = np.array([latitude[l] for l, _ in cells])
    wx = _weather(rng, len(cells), cell_lat)
    store = {(loc_ids[l], yr): pipeline.WeatherSeries(loc_ids[l], yr, wx[i]) for i, (l, yr) in enumerate(cells)}
    weekly = np.stack([pipeline.downsample(wx[i], "weekly") for i in range(len(cells))])
    cell_weather = weather_effect(weekly)

    rec_cell = np.repeat(np.arange(len(cells)), trials)
    rec_geno = np.empty(len(rec_cell), dtype=np.int64)
    for c in range(len(cells)):
        # a location tests the maturity groups adapted to its latitude
        centre = 8.0 * (1.0 - cell_lat[c])
        ok = np.flatnonzero(np.abs(gen_mg - centre) <= 2.0)
        pool = ok if ok.size else np.arange(genotypes)
        rec_geno[c * trials : (c + 1) * trials] = rng.choice(pool, size=trials)
    mg = gen_mg[rec_geno]
    parts = {
        "mg": mg_effect(mg),
        "cluster": FAMILY_EFFECT[fam[rec_geno] % len(FAMILY_EFFECT)],
        "weather": cell_weather[rec_cell],
    }
    signal = MG_WEIGHT * _z(parts["mg"]) + CLUSTER_WEIGHT * _z(parts["cluster"]) + WEATHER_WEIGHT * _z(parts["weather"])
    noise = rng.normal(0.0, noise_std, size=signal.shape)
    sig_sd = np.sqrt(max(TARGET_STD**2 - noise_std**2, 1e-6))
    y = TARGET_MEAN + sig_sd * _z(signal) + noise
    if len(y) > 1:
        y = TARGET_MEAN + (y - y.mean()) * (TARGET_STD / y.std())
    y = np.round(np.maximum(y, 1.0), 3)
    records = [
        pipeline.PerformanceRecord(
            record_id=f"R{i:06d}",
            year=cells[c][1],
            location_id=loc_ids[cells[c][0]],
            genotype_id=corr.ids[g],
            maturity_group=int(mg[i]),
            yield_bu_ac=float(y[i]),
        )
        for i, (c, g) in enumerate(zip(rec_cell, rec_geno))
    ]
    components = {k: v for k, v in parts.items()}
    components["noise"] = noise
    components["family"] = fam[rec_geno]
    return SyntheticData(records, store, corr, fam, components)


def generate_synthetic(out_dir, locations=100, years=13, genotypes=200, trials=4, seed=0):
    """Write the synthetic CSV triplet to ``out_dir``; returns the three paths."""
    return synthesize(locations, years, genotypes, trials, seed).write(out_dir)
