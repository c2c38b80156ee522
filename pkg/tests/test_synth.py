import numpy as np

from yatt import genotype, pipeline, synth


def test_default_size_and_calibration():
    d = synth.synthesize(seed=0)
    y = np.array([r.yield_bu_ac for r in d.records])
    assert len(d.records) == 5200
    assert abs(y.mean() - synth.TARGET_MEAN) < 0.5
    assert abs(y.std() - synth.TARGET_STD) < 0.5
    assert set(r.maturity_group for r in d.records) <= set(range(9))


def test_weather_satisfies_invariants(small_synth):
    for s in small_synth.weather.values():
        s.check()


def test_seeded(small_synth):
    again = synth.synthesize(locations=12, years=3, genotypes=30, trials=2, seed=5)
    assert again.records == small_synth.records
    other = synth.synthesize(locations=12, years=3, genotypes=30, trials=2, seed=6)
    assert other.records != small_synth.records


def test_files_parse_back(tmp_path, small_synth):
    perf, weather, corr = small_synth.write(tmp_path)
    records, skipped = pipeline.parse_performance_csv(perf)
    assert records == small_synth.records and not skipped
    assert pipeline.read_weather_csv(weather).keys() == small_synth.weather.keys()
    assert genotype.read_correlation_csv(corr).ids == small_synth.correlation.ids


def test_weather_effect_only_reads_the_window(rng):
    weekly = rng.normal(size=(4, 30, 7)) * 5 + 20
    base = synth.weather_effect(weekly)
    changed = weekly.copy()
    outside = [w for w in range(30) if w not in synth.SIGNAL_WEEKS]
    changed[:, outside, :] += 7.0
    np.testing.assert_array_equal(synth.weather_effect(changed), base)
    changed[:, 20, :] += 7.0
    assert not np.allclose(synth.weather_effect(changed), base)
