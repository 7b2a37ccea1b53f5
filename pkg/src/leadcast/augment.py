"""Leading-indicator covariate synthesis with controlled correlation.

Covariate column j of a series y is its own future, lead j steps ahead, plus
noise: x_t^j = y_{t+j} + gamma * (mu + sigma) * eps with one eps ~ N(0,1) per
(t, j). mu and sigma are the population mean and standard deviation of the
full series, so gamma alone steers how strongly each column correlates with
the value it foreshadows.

Columns are stored full length (T rows) with NaN past each column's last
defined position t = T - j; downstream windowing masks those cells out of the
loss. Noise is drawn for every lead in [1, k] in a fixed order even when a
lead is skipped, which keeps the kept columns bitwise identical between a
skip probe and the full generation under the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorrelationUndefinedError, DataError
from .tensor import seeded_rng

GAMMA_GRID = tuple(i / 10 for i in range(20))

CACHE_MAGIC = "# augmented covariate cache v1"


@dataclass(eq=False)
class AugmentedSeries:
    """One series plus its synthesized covariate columns.

    ``X`` has shape [T, len(leads)]; column c carries lead ``leads[c]``.
    ``realized_pcc`` aligns with ``leads`` and holds NaN when the correlation
    is undefined (constant aligned target), which the dataset mean excludes.
    """

    series_id: str
    y: np.ndarray
    X: np.ndarray
    k: int
    gamma: float
    skip_set: frozenset = frozenset()
    leads: tuple = ()
    realized_pcc: tuple = ()
    mu: float = 0.0
    sigma: float = 0.0

    @property
    def length(self) -> int:
        return int(self.y.size)

    @property
    def n_covariates(self) -> int:
        return self.X.shape[1]

    def defined_until(self, column: int) -> int:
        """Count of leading rows where covariate ``column`` is defined."""
        return self.length - self.leads[column]


def univariate(y, series_id: str = "") -> AugmentedSeries:
    """Wrap a covariate-free series in the common container."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    return AugmentedSeries(
        series_id=series_id,
        y=y,
        X=np.empty((y.size, 0)),
        k=0,
        gamma=0.0,
        mu=float(y.mean()),
        sigma=float(y.std()),
    )


def pearson_cc(a, b) -> float:
    """Pearson correlation of two equal-length sequences.

    Raises CorrelationUndefinedError when either input is constant rather
    than returning a silent 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"pearson_cc needs equal-length 1-D inputs, got {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("pearson_cc needs at least two points")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom == 0.0:
        raise CorrelationUndefinedError("correlation against a constant sequence")
    return float((da * db).sum() / denom)


def _validate_leads(k: int, skip_set, T: int):
    if k < 1:
        raise ValueError(f"covariate count k must be >= 1, got {k}")
    if k >= T:
        raise ValueError(f"k={k} must be smaller than the series length {T}")
    skip = frozenset(int(j) for j in skip_set)
    if not skip <= set(range(1, k + 1)):
        raise ValueError(f"skip_set {sorted(skip)} must be a subset of leads 1..{k}")
    if len(skip) == k:
        raise ValueError("skip_set omits every covariate; nothing left to generate")
    leads = tuple(j for j in range(1, k + 1) if j not in skip)
    return skip, leads


def synthesize_covariates(y, k: int, gamma: float, rng, skip_set=frozenset(),
                          series_id: str = "") -> AugmentedSeries:
    """Build the covariate matrix for one series.

    ``rng`` supplies one standard-normal draw per (position, lead) for every
    lead in [1, k], in lead order, regardless of ``skip_set``.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    T = y.size
    skip, leads = _validate_leads(k, skip_set, T)
    mu = float(y.mean())
    sigma = float(y.std())
    noise_scale = gamma * (mu + sigma)

    X = np.full((T, len(leads)), np.nan)
    pccs = []
    column = 0
    for j in range(1, k + 1):
        eps = rng.standard_normal(T - j)
        if j in skip:
            continue
        shifted = y[j:]
        X[: T - j, column] = shifted + noise_scale * eps
        try:
            pccs.append(pearson_cc(X[: T - j, column], shifted))
        except CorrelationUndefinedError:
            pccs.append(float("nan"))
        column += 1

    return AugmentedSeries(
        series_id=series_id,
        y=y,
        X=X,
        k=k,
        gamma=float(gamma),
        skip_set=skip,
        leads=leads,
        realized_pcc=tuple(pccs),
        mu=mu,
        sigma=sigma,
    )


def augment_dataset(records, k: int, gamma: float, seed: int,
                    skip_set=frozenset()) -> list[AugmentedSeries]:
    """Synthesize covariates for every record under one named RNG stream.

    k=0 returns univariate wrappers; the seed then has no effect.
    """
    if k == 0:
        if skip_set:
            raise ValueError("skip_set requires k >= 1")
        return [univariate(r.values, r.series_id) for r in records]
    rng = seeded_rng(seed, "augment")
    return [
        synthesize_covariates(r.values, k, gamma, rng, skip_set, r.series_id)
        for r in records
    ]


def mean_realized_pcc(series_list) -> float:
    """Dataset-level correlation label: mean over all defined per-lead PCCs."""
    values = [p for s in series_list for p in s.realized_pcc]
    if not values:
        raise ValueError("no covariate columns to average")
    finite = [v for v in values if np.isfinite(v)]
    if not finite:
        raise CorrelationUndefinedError("every covariate correlation is undefined")
    return float(np.mean(finite))


def pcc_curve(series_set, k: int, rng, grid=GAMMA_GRID) -> np.ndarray:
    """Mean realized PCC at each grid gamma, under common noise draws.

    The same eps values feed every gamma, so the curve reflects the noise
    scale alone; with common draws the sample correlation of y_{t+j} against
    y_{t+j} + c*eps is non-increasing in |c|, making the curve monotone
    without Monte-Carlo wiggle.
    """
    if len(series_set) == 0:
        raise ValueError("series_set is empty")
    per_gamma = [[] for _ in grid]
    for y in series_set:
        y = np.ascontiguousarray(y, dtype=np.float64)
        T = y.size
        _, leads = _validate_leads(k, frozenset(), T)
        scale = y.mean() + y.std()
        for j in leads:
            eps = rng.standard_normal(T - j)
            shifted = y[j:]
            for gi, gamma in enumerate(grid):
                try:
                    per_gamma[gi].append(
                        pearson_cc(shifted + gamma * scale * eps, shifted)
                    )
                except CorrelationUndefinedError:
                    per_gamma[gi].append(float("nan"))
    means = np.array([
        np.nan if not np.isfinite(vals).any() else np.nanmean(vals)
        for vals in (np.asarray(v) for v in per_gamma)
    ])
    return means


def gamma_for_target_pcc(series_set, k: int, target_pcc: float, rng) -> float:
    """Grid gamma whose dataset-mean PCC lands closest to the target.

    Ties break toward the smaller gamma (less noise).
    """
    if not 0.0 < target_pcc <= 1.0:
        raise ValueError(f"target_pcc must be in (0, 1], got {target_pcc}")
    means = pcc_curve(series_set, k, rng)
    if not np.isfinite(means).all():
        raise CorrelationUndefinedError("PCC undefined across the dataset")
    best = int(np.argmin(np.abs(means - target_pcc)))
    return GAMMA_GRID[best]


# ----------------------------------------------------------------------------
# Cache file

# Block layout: @series/@gamma/@seed/@k/@leads/@mu/@sigma/@pcc header lines,
# a column title row, then one comma-separated row per position t (1-based).
# Cells where a column is past its last defined position stay empty.


def _fmt(value: float) -> str:
    return repr(float(value))


def save_augmented_cache(path, series_list, seed: int) -> None:
    """Write augmented series to a text cache that reloads bit-exactly."""
    lines = [CACHE_MAGIC]
    for s in series_list:
        lines.append(f"@series {s.series_id}")
        lines.append(f"@gamma {_fmt(s.gamma)}")
        lines.append(f"@seed {seed}")
        lines.append(f"@k {s.k}")
        lines.append(f"@leads {','.join(str(j) for j in s.leads)}")
        lines.append(f"@mu {_fmt(s.mu)}")
        lines.append(f"@sigma {_fmt(s.sigma)}")
        lines.append(f"@pcc {','.join(_fmt(p) for p in s.realized_pcc)}")
        lines.append("t,y," + ",".join(f"x{j}" for j in s.leads))
        for t in range(s.length):
            cells = [str(t + 1), _fmt(s.y[t])]
            for c in range(s.n_covariates):
                cells.append(_fmt(s.X[t, c]) if t < s.defined_until(c) else "")
            lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_augmented_cache(path):
    """Read a cache file back; returns (series list, seed)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CACHE_MAGIC:
        raise DataError(f"{path} is not an augmented covariate cache")

    series_list = []
    seed = None
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        header: dict[str, str] = {}
        while i < len(lines) and lines[i].startswith("@"):
            key, _, value = lines[i].partition(" ")
            header[key[1:]] = value
            i += 1
        try:
            sid = header["series"]
            gamma = float(header["gamma"])
            seed = int(header["seed"])
            k = int(header["k"])
            leads = tuple(
                int(tok) for tok in header["leads"].split(",") if tok
            )
            mu = float(header["mu"])
            sigma = float(header["sigma"])
            pcc = tuple(float(tok) for tok in header["pcc"].split(",") if tok)
        except (KeyError, ValueError) as exc:
            raise DataError(f"bad cache block header near line {i}: {exc}") from None
        i += 1  # column title row
        rows = []
        while i < len(lines) and lines[i] and not lines[i].startswith("@"):
            rows.append(lines[i].split(","))
            i += 1
        if not rows:
            raise DataError(f"cache block for {sid!r} has no rows")
        y = np.array([float(r[1]) for r in rows])
        X = np.full((len(rows), len(leads)), np.nan)
        for t, r in enumerate(rows):
            for c, cell in enumerate(r[2:]):
                if cell:
                    X[t, c] = float(cell)
        series_list.append(AugmentedSeries(
            series_id=sid, y=y, X=X, k=k, gamma=gamma,
            skip_set=frozenset(range(1, k + 1)) - set(leads),
            leads=leads, realized_pcc=pcc, mu=mu, sigma=sigma,
        ))
    return series_list, seed
