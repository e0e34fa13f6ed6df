"""Ground-record ingestion, synthesis, and anomaly standardization.

The ground panel shares the attractor panels' (variable, site)
coordinate system; file input maps weather-station rows onto configured
sites, and synthetic ground copies or re-runs a surrogate trajectory
with observation noise at a chosen signal-to-noise ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .dynamics import (AttractorEstimate, default_observables, detect_steady_state,
                       integrate_lorenz96, seasonal_aggregate, synth_index)
from .errors import ConfigError, PanelFormatError
from .panel import Coord, Panel
from .seeding import derive_rng

SEASON_NAMES = ("winter", "spring", "summer", "fall")


def load_panel(path, station_sites: dict[str, tuple[str, str]] | None = None) -> Panel:
    """Parse a station,year,season,value file into a raw panel.

    Seasons are winter/spring/summer/fall within calendar years; the
    global season index runs from the earliest year seen. Stations map
    to panel coordinates through ``station_sites`` (identity onto
    ("wet", station) when omitted). Duplicate (station, season) rows are
    a hard error naming the line; missing cells stay NaN and fall out of
    regressions downstream.
    """
    rows = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise PanelFormatError(f"{path}: empty file")
    header = lines[0].strip().lower()
    if header != "station,year,season,value":
        raise PanelFormatError(f"{path}:1: expected header station,year,season,value")
    problems = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            problems.append(f"line {lineno}: expected 4 fields, got {len(parts)}")
            continue
        station, year_s, season_s, value_s = parts
        try:
            year = int(year_s)
            season = SEASON_NAMES.index(season_s.lower())
            value = float(value_s)
        except ValueError:
            problems.append(f"line {lineno}: cannot parse {line!r}")
            continue
        rows.append((lineno, station, year, season, value))
    if problems:
        raise PanelFormatError(f"{path}: " + "; ".join(problems))
    if not rows:
        raise PanelFormatError(f"{path}: no data rows")

    year0 = min(r[2] for r in rows)
    n_seasons = max((r[2] - year0) * 4 + r[3] for r in rows) + 1
    series: dict[Coord, np.ndarray] = {}
    filled: dict[tuple[Coord, int], int] = {}
    for lineno, station, year, season, value in rows:
        if station_sites is not None:
            if station not in station_sites:
                raise PanelFormatError(
                    f"{path}: station {station!r} has no configured site mapping")
            coord = station_sites[station]
        else:
            coord = ("wet", station)
        t = (year - year0) * 4 + season
        prev = filled.get((coord, t))
        if prev is not None:
            raise PanelFormatError(
                f"{path}: line {lineno} duplicates (station={station}, "
                f"year={year}, season={SEASON_NAMES[season]}) from line {prev}")
        filled[(coord, t)] = lineno
        series.setdefault(coord, np.full(n_seasons, np.nan))[t] = value
    return Panel(series)


@dataclass
class StandardizationFactors:
    """Per-series, per-season-of-year means and sds from a reference window."""

    reference_window: tuple[int, int]
    seasons_per_year: int
    means: dict[Coord, np.ndarray]
    sds: dict[Coord, np.ndarray]

    def inverse(self, panel: Panel) -> Panel:
        out = {}
        for key, vals in panel.values.items():
            soy = np.arange(vals.size) % self.seasons_per_year
            out[key] = vals * self.sds[key][soy] + self.means[key][soy]
        return Panel(out, seasons_per_year=panel.seasons_per_year)


def standardize_anomalies(panel: Panel,
                          reference_window: tuple[int, int]) -> tuple[Panel, StandardizationFactors]:
    """Per-series, per-season-of-year z-scores against the reference window.

    Factors come from the reference window only, so later data cannot
    move them; they are stored for exact inverse transforms. A zero
    reference sd is an error naming the series and season.
    """
    lo, hi = reference_window
    if not 0 <= lo < hi <= panel.n_seasons:
        raise ConfigError(f"reference window [{lo}, {hi}) outside panel")
    spy = panel.seasons_per_year
    soy_all = np.arange(panel.n_seasons) % spy
    means: dict[Coord, np.ndarray] = {}
    sds: dict[Coord, np.ndarray] = {}
    out = {}
    for key, vals in panel.values.items():
        m = np.empty(spy)
        s = np.empty(spy)
        for season in range(spy):
            ref = vals[lo:hi][soy_all[lo:hi] == season]
            ref = ref[np.isfinite(ref)]
            if ref.size < 3:
                raise ConfigError(
                    f"series {key}: fewer than 3 reference values for "
                    f"season-of-year {season}")
            m[season] = ref.mean()
            s[season] = ref.std()
            if s[season] <= 1e-12:
                raise ConfigError(
                    f"series {key}: zero variance in reference window for "
                    f"season-of-year {season}")
        means[key] = m
        sds[key] = s
        out[key] = (vals - m[soy_all]) / s[soy_all]
    factors = StandardizationFactors(reference_window=(lo, hi), seasons_per_year=spy,
                                     means=means, sds=sds)
    return Panel(out, seasons_per_year=spy), factors


def _destandardized_member(member: AttractorEstimate) -> Panel:
    raw = {}
    for key, vals in member.panel.values.items():
        mean, sd = member.scale[key]
        raw[key] = vals * sd + mean
    return Panel(raw)


def _fresh_run_panel(cfg: PipelineConfig, n_seasons: int) -> Panel:
    sur = cfg.surrogate
    run = sur.run_config(cfg.seed)
    seed = derive_rng(cfg.seed, "ground", "fresh").integers(2**32)
    traj = integrate_lorenz96(cfg.ground.forcing, sur.K, sur.dt,
                              sur.n_seasons * sur.steps_per_season,
                              x0=None, seed=int(seed))
    panel = seasonal_aggregate(traj, sur.steps_per_season,
                               default_observables(sur.K, sur.temp_smooth))
    for name, (ra, rb) in sorted(run.indices.items()):
        panel.add("idx", name, synth_index(panel, set(ra), set(rb)))
    variables = sorted({var for var, _ in panel.values})
    monitored = [np.mean([panel.series(v, s) for v2, s in panel.catalog() if v2 == v], axis=0)
                 for v in variables]
    steady = detect_steady_state(monitored, sur.steady_window, sur.slope_tol)
    steady_panel = panel.window(steady, panel.n_seasons)
    if steady_panel.n_seasons < n_seasons:
        raise ConfigError(
            f"fresh ground run has only {steady_panel.n_seasons} steady seasons, "
            f"need {n_seasons}; lengthen surrogate.n_seasons")
    return steady_panel.window(0, n_seasons)


def make_ground_panel(cfg: PipelineConfig, library: list[AttractorEstimate]) -> tuple[Panel, dict]:
    """Raw (unstandardized) ground panel plus provenance metadata.

    Synthetic modes add per-series Gaussian observation noise with
    sd = series sd / snr; file mode parses the configured input.
    """
    windows = cfg.schedule.windows()
    n_seasons = windows.end
    mode = cfg.ground.mode
    if mode == "file":
        stations = cfg.resolved_stations()
        panel = load_panel(cfg.ground.path, station_sites=stations)
        if panel.n_seasons < n_seasons:
            raise ConfigError(f"ground file covers {panel.n_seasons} seasons, "
                              f"schedule needs {n_seasons}")
        return panel, {"mode": "file", "path": str(cfg.ground.path)}

    if mode == "member":
        label = cfg.ground.member or library[0].label
        members = {a.label: a for a in library}
        member = members[label]
        base = _destandardized_member(member).window(0, n_seasons)
        meta = {"mode": "member", "member": label,
                "true_forcing": member.parameter.value}
    else:
        base = _fresh_run_panel(cfg, n_seasons)
        meta = {"mode": "fresh", "true_forcing": float(cfg.ground.forcing)}

    rng = derive_rng(cfg.seed, "ground", "noise")
    noisy = {}
    for key in sorted(base.values):
        vals = base.values[key]
        sd = float(np.std(vals[np.isfinite(vals)]))
        noise_sd = sd / cfg.ground.snr if sd > 0 else 0.0
        noisy[key] = vals + noise_sd * rng.standard_normal(vals.size)
    meta["snr"] = cfg.ground.snr
    return Panel(noisy), meta
