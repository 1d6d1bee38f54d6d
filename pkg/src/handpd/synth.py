"""Synthetic spiral recordings for desk-scale verification.

Both classes draw an Archimedean spiral r = pitch * theta / (2 pi) at roughly
constant pen speed. PD-like subjects add a radial tremor
``amp * sin(2 pi f t + phase)`` with f drawn per subject from the tremor
band; everything else (jitter, tilt drift, pressure profile) comes from the
same distributions for both classes unless configured otherwise.

Tilt and pressure are deliberately uninformative after per-sequence
min-max normalization: tilt drifts share one shape across subjects and the
per-class pressure spread lives in the baseline level, which normalization
removes.
"""
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .numkit import Rng
from .signal import ManifestRow, RawSequence, write_manifest, write_sequence


@dataclass(frozen=True)
class SynthConfig:
    n_subjects_per_class: int = 15
    sample_rate: float = 200.0
    duration: float = 20.0
    pitch: float = 0.5  # mm per turn
    turns: float = 2.0
    tremor_freq_lo: float = 4.0
    tremor_freq_hi: float = 6.0
    tremor_amp_pd: float = 1.0
    tremor_amp_hc: float = 0.0
    noise_sd: float = 0.05
    pressure_sd_pd: float = 0.05
    pressure_sd_hc: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("n_subjects_per_class", "sample_rate", "duration", "pitch", "turns"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if not 0 < self.tremor_freq_lo <= self.tremor_freq_hi:
            raise ParameterError("tremor frequency range must satisfy 0 < lo <= hi")
        for name in ("tremor_amp_pd", "tremor_amp_hc", "noise_sd", "pressure_sd_pd", "pressure_sd_hc"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")

    @property
    def length(self):
        return int(round(self.sample_rate * self.duration))

    def to_dict(self):
        return asdict(self)


# Tilt holds nearly still and drifts in the final stretch of the stroke;
# pressure carries one narrow mid-stroke bump. Both shapes keep the
# normalized nuisance channels near zero for most of a recording, which the
# optimizer needs: O(1) uninformative inputs across the whole sequence stall
# training at the class prior.
_DRIFT_POWER = 20.0
_BUMP_WIDTH = 0.05  # fraction of the recording (Gaussian sd)


def _spiral_angle(n, turns):
    # arc length of r = b*theta grows ~ theta**2, so theta ~ sqrt(progress)
    # gives constant speed; start a quarter turn in to avoid the singular centre
    th0 = 0.5 * math.pi
    th1 = th0 + 2.0 * math.pi * turns
    u = np.linspace(0.0, 1.0, n)
    return np.sqrt(th0**2 + (th1**2 - th0**2) * u)


def generate_spiral_sequence(label, cfg, rng, subject_id="synth", length=None):
    """One synthetic recording; ``length`` overrides ``cfg.length``."""
    if label not in ("PD", "HC"):
        raise ParameterError(f"label must be PD or HC, got {label!r}")
    n = cfg.length if length is None else int(length)
    if n < 2:
        raise ParameterError("sequence needs at least 2 points")
    t = np.arange(n) / cfg.sample_rate
    # per-subject draws, always consumed in the same order for both classes
    f, phase, rot, cx, cy, az0, al0, p0 = rng.random(8)
    f = cfg.tremor_freq_lo + (cfg.tremor_freq_hi - cfg.tremor_freq_lo) * f
    turns = cfg.turns * n / cfg.length if length is not None else cfg.turns
    theta = _spiral_angle(n, max(turns, 1e-3))
    r = cfg.pitch * theta / (2.0 * math.pi)
    theta = theta + 2.0 * math.pi * rot  # rotate the drawing, not the radius
    amp = cfg.tremor_amp_pd if label == "PD" else cfg.tremor_amp_hc
    r = r + amp * np.sin(2.0 * math.pi * f * t + 2.0 * math.pi * phase)
    jitter = rng.normal(2 * n).reshape(2, n) * cfg.noise_sd
    x = 100.0 + 20.0 * cx + r * np.cos(theta) + jitter[0]
    y = 80.0 + 20.0 * cy + r * np.sin(theta) + jitter[1]
    # slow tilt drifts: one shared shape, per-subject offset and size. After
    # min-max normalization every subject shows the same curve, so tilt
    # carries neither class nor identity information.
    size = 1.0 + 0.5 * rng.random(2)
    span = n / cfg.sample_rate
    u = t / span
    azimuth = 0.8 + 0.4 * az0 + 0.05 * size[0] * u**_DRIFT_POWER
    altitude = 0.9 + 0.3 * al0 + 0.03 * size[1] * (1.0 - u) ** _DRIFT_POWER
    # pen-down pressure: a per-subject baseline (removed by normalization, and
    # the carrier of the per-class spread) with one smooth mid-stroke bump
    psd = cfg.pressure_sd_pd if label == "PD" else cfg.pressure_sd_hc
    level = max(0.5 + 0.2 * p0 + psd * rng.normal(1)[0], 0.05)
    pressure = level * (1.0 + 0.1 * np.exp(-0.5 * ((u - 0.5) / _BUMP_WIDTH) ** 2))
    return RawSequence(
        subject_id=subject_id,
        label=label,
        task="spiral",
        t=t,
        x=x,
        y=y,
        azimuth=azimuth,
        altitude=altitude,
        pressure=pressure,
    )


def generate_sequences(cfg):
    """All subjects in memory, PD first then HC, each with its own child rng."""
    rng = Rng(cfg.seed)
    children = rng.spawn(2 * cfg.n_subjects_per_class)
    out = []
    k = 0
    for label in ("PD", "HC"):
        for i in range(cfg.n_subjects_per_class):
            sid = f"{label.lower()}{i + 1:03d}"
            out.append(generate_spiral_sequence(label, cfg, children[k], sid))
            k += 1
    return out


def generate_dataset(cfg, out_dir):
    """Write one dwt file per subject plus ``manifest.csv``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for seq in generate_sequences(cfg):
        path = out_dir / f"{seq.subject_id}.dwt"
        write_sequence(seq, path)
        rows.append(ManifestRow(seq.subject_id, seq.label, seq.task, path))
    manifest = out_dir / "manifest.csv"
    write_manifest(rows, manifest)
    return manifest
