"""Shared builders for synthetic datasets used across the test modules."""

import io
from pathlib import Path

import numpy as np

from leadcast.tensor import seeded_rng
from leadcast.tsf import DatasetPolicy, parse_tsf


def make_tsf_text(name, series, frequency="monthly", horizon=None):
    """Render (series_id, start, values) triples as a .tsf document."""
    lines = [
        f"@relation {name}",
        "@attribute series_name string",
        "@attribute start_timestamp date",
    ]
    if frequency:
        lines.append(f"@frequency {frequency}")
    if horizon is not None:
        lines.append(f"@horizon {horizon}")
    lines.append("@data")
    for sid, start, values in series:
        joined = ",".join(repr(float(v)) for v in values)
        lines.append(f"{sid}:{start}:{joined}")
    return "\n".join(lines) + "\n"


def seasonal_series(rng, length, period=12, noise=0.05):
    """Positive level + trend + seasonal cycle + mild noise, count-like."""
    t = np.arange(length, dtype=float)
    level = rng.uniform(20.0, 120.0)
    trend = rng.uniform(-0.1, 0.3) * t
    amplitude = level * rng.uniform(0.1, 0.4)
    phase = rng.uniform(0.0, 2 * np.pi)
    cycle = amplitude * np.sin(2 * np.pi * t / period + phase)
    wiggle = rng.standard_normal(length) * noise * level
    return np.maximum(level + trend + cycle + wiggle, 1.0)


def synthetic_records(n_series=12, length=84, seed=0, period=12, frequency="monthly",
                      horizon=12, name="synthetic"):
    """Parse a freshly built synthetic corpus; returns (meta, records)."""
    rng = seeded_rng(seed, "fixture")
    series = [
        (f"T{i + 1}", "2017-01-01 00-00-00", seasonal_series(rng, length, period))
        for i in range(n_series)
    ]
    text = make_tsf_text(name, series, frequency=frequency, horizon=horizon)
    policy = DatasetPolicy(min_length=1)
    return parse_tsf(io.StringIO(text), policy)


def write_tsf(path, n_series=8, length=60, seed=0, period=12, horizon=4):
    """Write a synthetic corpus to ``path``; the relation name is its stem."""
    path = Path(path)
    rng = seeded_rng(seed, "fixture")
    series = [
        (f"T{i + 1}", "2017-01-01 00-00-00", seasonal_series(rng, length, period))
        for i in range(n_series)
    ]
    path.write_text(make_tsf_text(path.stem, series, horizon=horizon))
    return [values for _, _, values in series]
