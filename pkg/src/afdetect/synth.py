"""Synthetic single-lead ECGs for tests, demos and the toy benchmark.

Normal rhythm: near-regular RR intervals with P, QRS and T waves.
AF rhythm: irregular RR intervals, no P wave, low-amplitude fibrillatory
oscillation in the 4-8 Hz band.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .ingest import DatasetManifest, EcgRecord, Label, ManifestEntry, write_csv_samples, write_manifest

# (amplitude, width s, offset from R s)
_P = (0.15, 0.025, -0.20)
_QRS = ((-0.12, 0.010, -0.030), (1.0, 0.012, 0.0), (-0.25, 0.012, 0.030))
_T = (0.30, 0.060, 0.28)


def _gauss(t, amp, width, centre):
    return amp * np.exp(-0.5 * ((t - centre) / width) ** 2)


def _beats(t, r_times, with_p):
    x = np.zeros_like(t)
    for r in r_times:
        near = np.abs(t - r) < 0.6
        tt = t[near]
        waves = _QRS + ((_T,) + ((_P,) if with_p else ()))
        for amp, width, off in waves:
            x[near] += _gauss(tt, amp, width, r + off)
    return x


def _r_times(duration, mean_rr, rng, jitter, first=None):
    times, t = [], first if first is not None else rng.uniform(0.1, mean_rr)
    while t < duration + 0.5:
        times.append(t)
        t += max(0.25, mean_rr * (1.0 + jitter(rng)))
    return np.asarray(times)


def normal_ecg(duration=10.0, fs=300.0, rng=None, noise=0.02) -> np.ndarray:
    rng = np.random.default_rng(rng)
    t = np.arange(int(round(duration * fs))) / fs
    mean_rr = 60.0 / rng.uniform(60, 90)
    r = _r_times(duration, mean_rr, rng, lambda g: g.normal(0.0, 0.02))
    x = _beats(t, r, with_p=True)
    x += 0.05 * np.sin(2 * np.pi * rng.uniform(0.1, 0.3) * t + rng.uniform(0, 2 * np.pi))
    return x + noise * rng.standard_normal(t.size)


def af_ecg(duration=10.0, fs=300.0, rng=None, noise=0.02) -> np.ndarray:
    rng = np.random.default_rng(rng)
    t = np.arange(int(round(duration * fs))) / fs
    mean_rr = 60.0 / rng.uniform(80, 140)
    r = _r_times(duration, mean_rr, rng, lambda g: g.uniform(-0.35, 0.35))
    x = _beats(t, r, with_p=False)
    for _ in range(3):
        x += rng.uniform(0.02, 0.05) * np.sin(2 * np.pi * rng.uniform(4, 8) * t + rng.uniform(0, 2 * np.pi))
    x += 0.05 * np.sin(2 * np.pi * rng.uniform(0.1, 0.3) * t + rng.uniform(0, 2 * np.pi))
    return x + noise * rng.standard_normal(t.size)


def qrs_train(duration=10.0, fs=300.0, heart_rate=72.0) -> np.ndarray:
    """Noise-free, perfectly regular beats; handy for digitizer round trips."""
    t = np.arange(int(round(duration * fs))) / fs
    return _beats(t, np.arange(0.3, duration + 0.5, 60.0 / heart_rate), with_p=True)


def make_record(record_id, label, duration=10.0, fs=300.0, rng=None) -> EcgRecord:
    label = Label.parse(label)
    gen = af_ecg if label is Label.AF else normal_ecg
    return EcgRecord(record_id, gen(duration, fs, rng), fs, label)


def make_dataset(n_normal, n_af, seed=0, fs=300.0, duration=(10.0, 14.0)):
    """Records named ``N0000``.. and ``A0000``.. with durations drawn from ``duration``."""
    rng = np.random.default_rng(seed)
    records = []
    for prefix, label, count in (("N", Label.NORMAL, n_normal), ("A", Label.AF, n_af)):
        for k in range(count):
            dur = rng.uniform(*duration) if isinstance(duration, tuple) else duration
            records.append(make_record(f"{prefix}{k:04d}", label, dur, fs, rng))
    return records


def toy_split(records, n_test_normal, n_test_af, seed=0):
    """Assign an exact number of test records per class; the rest train."""
    rng = np.random.default_rng(seed)
    split = {}
    for label, n_test in ((Label.NORMAL, n_test_normal), (Label.AF, n_test_af)):
        ids = [r.id for r in records if r.label is label]
        test = set(np.asarray(ids)[rng.permutation(len(ids))[:n_test]].tolist())
        split.update({i: "test" if i in test else "train" for i in ids})
    return split


def write_dataset(directory, records, split=None) -> DatasetManifest:
    """Write one CSV per record plus ``manifest.csv``."""
    directory = Path(directory)
    (directory / "records").mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in records:
        path = directory / "records" / f"{rec.id}.csv"
        write_csv_samples(path, rec.samples)
        entries.append(ManifestEntry(rec.id, str(path), rec.label, (split or {}).get(rec.id, ""),
                                     {"fs": repr(rec.fs)}))
    manifest = DatasetManifest(entries)
    write_manifest(directory / "manifest.csv", manifest, extra_columns=("fs",))
    return manifest
