"""Pipeline configuration: one nested key/value file, all constants overridable.

Defaults carry the published constants (1000 maps of dimension 8, lags
4..11 for lead 3, top percents {10, 30, 100}, retention threshold 0.5
over the top 10, FDR q = 0.01, calibration over 8 seasons). The seed is
mandatory; nothing falls back to wall-clock entropy.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .dynamics import RunConfig, TuningParameter
from .embedding import WindowSchedule, split_windows
from .errors import ConfigError

CONFIG_VERSION = 1


@dataclass
class SurrogateConfig:
    forcings: list[float] = field(default_factory=lambda: [5.0, 6.0, 7.0, 8.0, 9.0, 10.0])
    K: int = 36
    dt: float = 0.05
    steps_per_season: int = 20
    n_seasons: int = 400
    temp_smooth: int = 5
    indices: dict[str, list[list[str]]] = field(default_factory=dict)
    steady_window: int = 40
    slope_tol: float = 0.01
    min_steady_seasons: int = 60

    def label(self, forcing: float) -> str:
        return f"F{forcing:g}"

    def parameters(self) -> list[TuningParameter]:
        return [TuningParameter(float(f), self.label(f)) for f in self.forcings]

    def run_config(self, master_seed: int) -> RunConfig:
        return RunConfig(K=self.K, dt=self.dt, steps_per_season=self.steps_per_season,
                         n_seasons=self.n_seasons, temp_smooth=self.temp_smooth,
                         indices={k: (tuple(a), tuple(b)) for k, (a, b) in
                                  sorted(self.indices.items())},
                         steady_window=self.steady_window, slope_tol=self.slope_tol,
                         min_steady_seasons=self.min_steady_seasons,
                         master_seed=master_seed)


@dataclass
class EmbeddingConfig:
    n_maps: int = 1000
    dim: int = 8
    lag_min: int = 4
    lag_max: int = 11
    lead: int = 3
    max_subset_size: int | None = None


@dataclass
class ScheduleConfig:
    first_season: int = 0
    lengths: list[int] = field(default_factory=lambda: [28, 8, 8, 5])

    def windows(self) -> WindowSchedule:
        if len(self.lengths) != 4:
            raise ConfigError("schedule.lengths must have 4 entries")
        return split_windows(self.first_season, tuple(self.lengths))


@dataclass
class SelectionConfig:
    x_grid: list[int] = field(default_factory=lambda: [10, 30, 100])
    retention_threshold: float = 0.5
    top_k: int = 10
    vote_k: int = 2
    vote_mode: str = "majority"
    allow_switching: bool = True


@dataclass
class ShrinkageConfig:
    n_points: int = 100
    target_r: float = 1.0 / 3.0
    n_reps: int = 2000
    positive_part: bool = False  # clamp the deviation-shrink factor at zero


@dataclass
class CalibrationConfig:
    window: int = 8  # seasons immediately before the predict window (8 or 12)
    direction: str = "obs_on_pred"


@dataclass
class GroundConfig:
    mode: str = "member"  # member | fresh | file
    member: str | None = None  # attractor label for mode=member
    forcing: float | None = None  # fresh-run forcing for mode=fresh
    snr: float = 2.0  # signal sd over noise sd for synthetic ground
    path: str | None = None  # input file for mode=file


@dataclass
class InversionConfig:
    enabled: bool = False
    q: float = 0.01
    bandwidth: float | None = None
    fraction_of_max: float = 0.9
    target_window: list[int] | None = None  # defaults to the predict window
    n_fitted_means: int | None = None
    trailing_seasons: int = 100


@dataclass
class PipelineConfig:
    seed: int
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    shrinkage: ShrinkageConfig = field(default_factory=ShrinkageConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    ground: GroundConfig = field(default_factory=GroundConfig)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    stations: dict[str, list[str]] = field(default_factory=dict)  # id -> [variable, site]
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("seed is mandatory")
        emb = self.embedding
        if emb.lag_min < emb.lead + 1:
            raise ConfigError(f"lag_min {emb.lag_min} leaks inside lead {emb.lead}")
        if emb.lag_max < emb.lag_min:
            raise ConfigError("lag_max must be >= lag_min")
        if emb.n_maps < 1 or emb.dim < 1:
            raise ConfigError("n_maps and dim must be >= 1")
        windows = self.schedule.windows()  # raises on overlap
        windows.calibration(self.calibration.window)
        if self.calibration.window not in (8, 12):
            raise ConfigError("calibration.window must be 8 or 12")
        for x in self.selection.x_grid:
            if x not in (10, 30, 100):
                raise ConfigError("x_grid entries must be among 10, 30, 100")
        if self.ground.mode not in ("member", "fresh", "file"):
            raise ConfigError("ground.mode must be member, fresh, or file")
        if self.ground.mode == "member":
            labels = [self.surrogate.label(f) for f in self.surrogate.forcings]
            member = self.ground.member or labels[0]
            if member not in labels:
                raise ConfigError(f"ground.member {member!r} is not in the library")
        if self.ground.mode == "fresh" and self.ground.forcing is None:
            raise ConfigError("ground.mode=fresh requires ground.forcing")
        if self.ground.mode == "file" and not self.ground.path:
            raise ConfigError("ground.mode=file requires ground.path")
        if self.ground.mode != "file" and self.ground.snr <= 0:
            raise ConfigError("ground.snr must be positive")
        if self.surrogate.min_steady_seasons < windows.end:
            raise ConfigError(
                f"surrogate.min_steady_seasons ({self.surrogate.min_steady_seasons}) "
                f"must cover the schedule end ({windows.end})")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for sid, target in self.stations.items():
            if len(target) != 2:
                raise ConfigError(f"station {sid} target must be [variable, site]")

    def resolved_stations(self) -> dict[str, tuple[str, str]]:
        """Station map, defaulting to four evenly spaced surrogate sites."""
        if self.stations:
            return {sid: (str(v), str(s)) for sid, (v, s) in sorted(self.stations.items())}
        K = self.surrogate.K
        picks = sorted({(i * K) // 4 for i in range(4)})
        return {f"st{j:02d}": ("wet", f"s{site:02d}") for j, site in enumerate(picks)}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["config_version"] = CONFIG_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d.pop("config_version", None)
        try:
            return cls(
                seed=d["seed"],
                surrogate=SurrogateConfig(**d.get("surrogate", {})),
                embedding=EmbeddingConfig(**d.get("embedding", {})),
                schedule=ScheduleConfig(**d.get("schedule", {})),
                selection=SelectionConfig(**d.get("selection", {})),
                shrinkage=ShrinkageConfig(**d.get("shrinkage", {})),
                calibration=CalibrationConfig(**d.get("calibration", {})),
                ground=GroundConfig(**d.get("ground", {})),
                inversion=InversionConfig(**d.get("inversion", {})),
                stations=d.get("stations", {}),
                threads=d.get("threads", 1),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key: {exc}") from exc
        except TypeError as exc:
            raise ConfigError(f"bad config structure: {exc}") from exc

    def config_hash(self) -> str:
        """Hash of the scientific payload (paths excluded)."""
        d = self.to_dict()
        d["ground"] = {k: v for k, v in d["ground"].items() if k != "path"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return PipelineConfig.from_dict(data)


def save_config(cfg: PipelineConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
