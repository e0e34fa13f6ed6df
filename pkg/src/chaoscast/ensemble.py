"""Ensemble selection over fitted delay-map models.

Model groups (one delay map fitted per station on an attractor panel)
are ranked on ground data by the pooled correlation of their shrunken
predictions, the top X percent are combined by mean or by the most
populous 1-D cluster (vote), the ensembles become self-contained keys,
keys are filtered on a later window by a strict correlation threshold,
and the per-season median of the survivors is the raw forecast.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .embedding import DelayMap, lagged_rows
from .metrics import _pearson_with_flag
from .panel import Panel
from .shrinkage import stein_adjust
from .subset import SubsetModel

KEY_FORMAT_VERSION = 1
ALLOWED_TOP_PERCENT = (10, 30, 100)
COMBINERS = ("mean", "vote")


@dataclass(frozen=True)
class Station:
    """A ground target: station id plus the panel coordinate it observes."""

    station_id: str
    variable: str
    site: str

    @property
    def target(self) -> tuple[str, str]:
        return (self.variable, self.site)


@dataclass
class ModelGroup:
    """One delay map with a fitted subset model per station."""

    attractor_id: str
    map_index: int
    dmap: DelayMap
    fits: dict[str, SubsetModel]

    @property
    def group_id(self) -> str:
        return f"{self.attractor_id}/m{self.map_index:04d}"

    @property
    def total_size(self) -> int:
        return sum(m.size for m in self.fits.values())

    def predict(self, panel: Panel, stations: tuple[Station, ...],
                seasons: tuple[int, int]) -> np.ndarray:
        """(stations, seasons) predictions; NaN where history is missing."""
        out = np.full((len(stations), seasons[1] - seasons[0]), np.nan)
        X, usable = lagged_rows(panel, self.dmap, seasons)
        for i, st in enumerate(stations):
            model = self.fits.get(st.station_id)
            if model is None:
                raise KeyError(f"no fitted model for station {st.station_id}")
            out[i, usable] = model.predict(X[usable])
        return out


def fit_model_group(attractor_id: str, map_index: int, dmap: DelayMap,
                    attractor_panel: Panel, stations, max_size: int | None = None,
                    seasons: tuple[int, int] | None = None) -> ModelGroup:
    """Fit the Cp-selected subset model per station on an attractor panel."""
    from .embedding import build_design_matrix
    from .subset import select_model

    if seasons is None:
        seasons = (dmap.max_lag, attractor_panel.n_seasons)
    fits = {}
    for st in stations:
        X, y, _ = build_design_matrix(attractor_panel, dmap, st.target, seasons)
        fits[st.station_id] = select_model(X, y, max_size=max_size)
    return ModelGroup(attractor_id=attractor_id, map_index=map_index,
                      dmap=dmap, fits=fits)


def observation_matrix(panel: Panel, stations: tuple[Station, ...],
                       seasons: tuple[int, int]) -> np.ndarray:
    return np.vstack([panel.series(*st.target)[seasons[0]:seasons[1]]
                      for st in stations])


def pooled_correlation(pred: np.ndarray, obs: np.ndarray) -> tuple[float, bool]:
    """Pearson correlation over all finite (station, season) pairs."""
    p = np.asarray(pred, dtype=float).ravel()
    o = np.asarray(obs, dtype=float).ravel()
    ok = np.isfinite(p) & np.isfinite(o)
    if ok.sum() < 3:
        return 0.0, True
    return _pearson_with_flag(p[ok], o[ok])


@dataclass
class RankedModel:
    group: ModelGroup
    correlation: float
    degenerate: bool = False


def rank_models(groups, panel: Panel, stations, rank_window,
                shrink_factor: float, positive_part: bool = False) -> list[RankedModel]:
    """Order model groups by pooled correlation of shrunken predictions.

    Zero-variance predictions rank with correlation 0 and a degenerate
    flag; ties break toward smaller models, then input order.
    """
    stations = tuple(stations)
    obs = observation_matrix(panel, stations, rank_window)
    ranked = []
    for idx, group in enumerate(groups):
        pred = stein_adjust(group.predict(panel, stations, rank_window), shrink_factor,
                            positive_part=positive_part)
        r, degenerate = pooled_correlation(pred, obs)
        ranked.append((-(0.0 if degenerate else r), group.total_size, idx,
                       RankedModel(group, 0.0 if degenerate else r, degenerate)))
    ranked.sort(key=lambda item: item[:3])
    return [item[3] for item in ranked]


def take_top_percent(ranked: list[RankedModel], top_percent: int) -> list[RankedModel]:
    """The ceil(X% of count) most correlated models, from the top."""
    if top_percent not in ALLOWED_TOP_PERCENT:
        raise ValueError(f"top_percent must be one of {ALLOWED_TOP_PERCENT}")
    if not ranked:
        raise ValueError("no ranked models to draw from")
    count = math.ceil(len(ranked) * top_percent / 100.0)
    return ranked[:count]


def combine_mean(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 1:
        raise ValueError("need at least one prediction")
    return float(values.mean())


def _split_costs(sorted_vals: np.ndarray) -> np.ndarray:
    """Within-cluster SS for every sorted cut point (left size 1..n-1)."""
    n = sorted_vals.size
    pref = np.concatenate([[0.0], np.cumsum(sorted_vals)])
    pref2 = np.concatenate([[0.0], np.cumsum(sorted_vals**2)])

    def seg(i, j):
        s = pref[j] - pref[i]
        s2 = pref2[j] - pref2[i]
        return s2 - s * s / (j - i)

    sizes = np.arange(1, n)
    left = pref2[1:n] - pref[1:n] ** 2 / sizes
    right_s = pref[n] - pref[1:n]
    right_s2 = pref2[n] - pref2[1:n]
    right = right_s2 - right_s**2 / (n - sizes)
    return left + right


def _partition_indices(sorted_vals: np.ndarray, k: int) -> list[np.ndarray]:
    """Exact minimum within-SS partition of sorted 1-D values into k runs."""
    n = sorted_vals.size
    if k >= n:
        return [sorted_vals[i:i + 1] for i in range(n)]
    if k == 2:
        cut = int(np.argmin(_split_costs(sorted_vals))) + 1
        return [sorted_vals[:cut], sorted_vals[cut:]]
    pref = np.concatenate([[0.0], np.cumsum(sorted_vals)])
    pref2 = np.concatenate([[0.0], np.cumsum(sorted_vals**2)])

    def seg(i, j):
        s = pref[j] - pref[i]
        s2 = pref2[j] - pref2[i]
        return s2 - s * s / (j - i)

    INF = float("inf")
    dp = np.full((k + 1, n + 1), INF)
    back = np.zeros((k + 1, n + 1), dtype=int)
    dp[0, 0] = 0.0
    for c in range(1, k + 1):
        for j in range(c, n + 1):
            best, bi = INF, c - 1
            for i in range(c - 1, j):
                val = dp[c - 1, i] + seg(i, j)
                if val < best:
                    best, bi = val, i
            dp[c, j], back[c, j] = best, bi
    cuts = []
    j = n
    for c in range(k, 0, -1):
        i = back[c, j]
        cuts.append((i, j))
        j = i
    cuts.reverse()
    return [sorted_vals[i:j] for i, j in cuts]


def combine_vote(values, k: int = 2, mode: str = "majority") -> float:
    """Majority-cluster combination of one season's model predictions.

    Values are split into k groups by the exact sorted-cut partition
    minimizing within-cluster sum of squares. ``majority`` returns the
    mean of the most populous cluster (population ties go to the cluster
    whose mean is nearer the overall mean, then to the lower mean);
    ``two_cluster_average`` averages the members of the two most
    populous clusters instead.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 1:
        raise ValueError("need at least one prediction")
    if k < 1:
        raise ValueError("k must be >= 1")
    if mode not in ("majority", "two_cluster_average"):
        raise ValueError("unknown vote mode")
    if k == 1 or values.size == 1:
        return combine_mean(values)
    clusters = _partition_indices(np.sort(values), k)
    overall = float(values.mean())
    if mode == "two_cluster_average":
        ranked = sorted(clusters, key=lambda c: (-c.size, float(c.mean())))
        members = np.concatenate(ranked[:2]) if len(ranked) >= 2 else ranked[0]
        return float(members.mean())
    return float(select_majority_cluster(clusters, overall).mean())


def select_majority_cluster(clusters, overall: float) -> np.ndarray:
    """Most populous cluster; ties resolved toward the overall mean, then low.

    The distance comparison carries an epsilon: with two equal-size
    clusters the overall mean sits exactly midway, so "nearer the mean"
    is a structural tie that must fall through to the lower-mean rule
    rather than be decided by rounding noise.
    """
    top_size = max(c.size for c in clusters)
    finalists = [c for c in clusters if c.size == top_size]
    if len(finalists) == 1:
        return finalists[0]
    means = [float(c.mean()) for c in finalists]
    dists = [abs(m - overall) for m in means]
    scale = 1.0 + abs(overall) + max(abs(m) for m in means)
    d_min = min(dists)
    nearest = [(m, c) for m, d, c in zip(means, dists, finalists)
               if d <= d_min + 1e-9 * scale]
    return min(nearest, key=lambda mc: mc[0])[1]


def choose_combiner(mean_series, vote_series, ground, window=None) -> str:
    """Pick the combiner with the higher holdout correlation; ties to mean.

    Series and ground may be (stations, seasons) blocks or vectors,
    already restricted to a holdout immediately preceding prediction.
    """
    r_mean, deg_mean = pooled_correlation(np.asarray(mean_series), np.asarray(ground))
    r_vote, deg_vote = pooled_correlation(np.asarray(vote_series), np.asarray(ground))
    if deg_mean and deg_vote:
        warnings.warn("both combiner series degenerate on the holdout; "
                      "defaulting to mean", stacklevel=2)
        return "mean"
    if deg_vote:
        return "mean"
    if deg_mean:
        return "vote"
    return "vote" if r_vote > r_mean else "mean"


def combine_members(member_preds: np.ndarray, combiner: str,
                    vote_k: int = 2, vote_mode: str = "majority") -> np.ndarray:
    """Reduce an (members, stations, seasons) stack to (stations, seasons)."""
    if combiner not in COMBINERS:
        raise ValueError(f"combiner must be one of {COMBINERS}")
    m, s, t = member_preds.shape
    out = np.full((s, t), np.nan)
    for i in range(s):
        for j in range(t):
            cell = member_preds[:, i, j]
            cell = cell[np.isfinite(cell)]
            if cell.size == 0:
                continue
            if combiner == "mean":
                out[i, j] = combine_mean(cell)
            else:
                out[i, j] = combine_vote(cell, k=vote_k, mode=vote_mode)
    return out


@dataclass
class PredictorKey:
    """Self-contained record of one ensemble predictor.

    Carries everything needed to replay its predictions on a panel:
    the member delay maps with their per-station subset fits, the
    top-percent cut, the combiner, the shrinkage factor, and the lead.
    """

    attractor_id: str
    top_percent: int
    combiner: str
    lead: int
    stations: tuple[Station, ...]
    members: tuple[ModelGroup, ...]
    shrink_factor: float
    correlations: dict[str, float] = field(default_factory=dict)
    vote_k: int = 2
    vote_mode: str = "majority"
    positive_part: bool = False

    def __post_init__(self):
        if self.top_percent not in ALLOWED_TOP_PERCENT:
            raise ValueError(f"top_percent must be one of {ALLOWED_TOP_PERCENT}")
        if self.combiner not in COMBINERS:
            raise ValueError(f"combiner must be one of {COMBINERS}")
        if not self.members:
            raise ValueError("a key needs at least one member model")
        for r in self.correlations.values():
            if not -1.0 - 1e-12 <= r <= 1.0 + 1e-12:
                raise ValueError("stored correlations must lie in [-1, 1]")

    @property
    def key_id(self) -> str:
        return f"{self.attractor_id}/X{self.top_percent:03d}/{self.combiner}"

    def predict(self, panel: Panel, seasons: tuple[int, int]) -> np.ndarray:
        """Shrunken (stations, seasons) ensemble predictions."""
        stack = np.stack([g.predict(panel, self.stations, seasons)
                          for g in self.members])
        combined = combine_members(stack, self.combiner, self.vote_k, self.vote_mode)
        return stein_adjust(combined, self.shrink_factor,
                            positive_part=self.positive_part)


def form_keys(attractor_id: str, ranked: list[RankedModel], panel: Panel,
              stations, select_window, shrink_factor: float,
              x_grid=(10, 30, 100), combiners=COMBINERS, lead: int = 3,
              vote_k: int = 2, vote_mode: str = "majority",
              positive_part: bool = False) -> list[PredictorKey]:
    """One key per (top-percent, combiner), scored on the select window."""
    stations = tuple(stations)
    obs = observation_matrix(panel, stations, select_window)
    # member predictions shared across keys: compute each group once
    cache: dict[str, np.ndarray] = {}
    ranked_all = take_top_percent(ranked, 100)
    for rm in ranked_all:
        cache[rm.group.group_id] = rm.group.predict(panel, stations, select_window)
    keys = []
    for x in x_grid:
        members = tuple(rm.group for rm in take_top_percent(ranked, x))
        stack = np.stack([cache[g.group_id] for g in members])
        for comb in combiners:
            combined = combine_members(stack, comb, vote_k, vote_mode)
            adjusted = stein_adjust(combined, shrink_factor, positive_part=positive_part)
            r, degenerate = pooled_correlation(adjusted, obs)
            keys.append(PredictorKey(
                attractor_id=attractor_id, top_percent=x, combiner=comb,
                lead=lead, stations=stations, members=members,
                shrink_factor=shrink_factor,
                correlations={"select": 0.0 if degenerate else r},
                vote_k=vote_k, vote_mode=vote_mode, positive_part=positive_part))
    return keys


def retain_predictors(keys: list[PredictorKey], panel: Panel, retain_window,
                      threshold: float = 0.5, top_k: int = 10,
                      allow_switching: bool = True) -> list[PredictorKey]:
    """Strictly-above-threshold keys among the per-attractor top_k.

    Keys are ranked by select-window correlation per attractor; the top
    ``top_k`` are re-scored on the retain window, with the combiner
    allowed to switch if its twin scores higher there. Returns possibly
    an empty list: no forecast is a first-class outcome.
    """
    by_attractor: dict[str, list[PredictorKey]] = {}
    for key in keys:
        by_attractor.setdefault(key.attractor_id, []).append(key)

    retained = []
    for attractor_id in sorted(by_attractor):
        group = sorted(by_attractor[attractor_id],
                       key=lambda k: -k.correlations.get("select", 0.0))
        for key in group[:top_k]:
            best_key, best_r = _score_on_window(key, panel, retain_window)
            if allow_switching:
                twin = replace(key, combiner="vote" if key.combiner == "mean" else "mean",
                               correlations=dict(key.correlations))
                twin_key, twin_r = _score_on_window(twin, panel, retain_window)
                if twin_r > best_r:
                    best_key, best_r = twin_key, twin_r
            if best_r > threshold:
                retained.append(best_key)
    return retained


def _score_on_window(key: PredictorKey, panel: Panel, window) -> tuple[PredictorKey, float]:
    pred = key.predict(panel, window)
    obs = observation_matrix(panel, key.stations, window)
    r, degenerate = pooled_correlation(pred, obs)
    r = 0.0 if degenerate else r
    correlations = dict(key.correlations)
    correlations["retain"] = r
    return replace(key, correlations=correlations), r


def median_combine(key_preds: np.ndarray) -> np.ndarray:
    """Per-season median across retained keys (even count: middle-two mean)."""
    key_preds = np.asarray(key_preds, dtype=float)
    if key_preds.ndim != 3 or key_preds.shape[0] < 1:
        raise ValueError("need a (keys, stations, seasons) stack")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmedian(key_preds, axis=0)


@dataclass
class EnsembleForecast:
    """Final per-station, per-season predictions with provenance."""

    stations: tuple[str, ...]
    seasons: tuple[int, ...]
    predictions: np.ndarray  # (stations, seasons), calibrated anomalies
    raw_median: np.ndarray
    contributing_keys: tuple[str, ...]
    combiner_by_key: dict[str, str]
    calibration_slope: float
    calibration_intercept: float
    no_forecast: bool = False

    def __post_init__(self):
        if not self.no_forecast and not self.contributing_keys:
            raise ValueError("forecast provenance must be non-empty")


# --- key serialization (self-describing, versioned) ---------------------

def map_to_dict(dmap: DelayMap) -> dict:
    return {"coords": [list(c) for c in dmap.coords], "lead": dmap.lead}


def map_from_dict(d: dict) -> DelayMap:
    return DelayMap(coords=tuple((str(v), str(s), int(lag)) for v, s, lag in d["coords"]),
                    lead=int(d["lead"]))


def model_to_dict(model: SubsetModel) -> dict:
    return {
        "columns": list(model.columns),
        "coefficients": [float(c) for c in model.coefficients],
        "intercept": float(model.intercept),
        "rss": float(model.rss),
        "cp": float(model.cp),
        "n_rows": int(model.n_rows),
        "dropped": list(model.dropped),
    }


def model_from_dict(d: dict) -> SubsetModel:
    return SubsetModel(columns=tuple(int(c) for c in d["columns"]),
                       coefficients=np.array(d["coefficients"], dtype=float),
                       intercept=float(d["intercept"]), rss=float(d["rss"]),
                       cp=float(d["cp"]), n_rows=int(d["n_rows"]),
                       dropped=tuple(int(c) for c in d["dropped"]))


def key_to_dict(key: PredictorKey) -> dict:
    return {
        "format_version": KEY_FORMAT_VERSION,
        "key_id": key.key_id,
        "attractor_id": key.attractor_id,
        "top_percent": key.top_percent,
        "combiner": key.combiner,
        "lead": key.lead,
        "vote_k": key.vote_k,
        "vote_mode": key.vote_mode,
        "positive_part": key.positive_part,
        "shrink_factor": key.shrink_factor,
        "stations": [[st.station_id, st.variable, st.site] for st in key.stations],
        "correlations": {k: float(v) for k, v in sorted(key.correlations.items())},
        "members": [{
            "map_index": g.map_index,
            "map": map_to_dict(g.dmap),
            "fits": {sid: model_to_dict(m) for sid, m in sorted(g.fits.items())},
        } for g in key.members],
    }


def key_from_dict(d: dict) -> PredictorKey:
    if d.get("format_version") != KEY_FORMAT_VERSION:
        raise ValueError(f"unsupported key format version {d.get('format_version')}")
    members = tuple(ModelGroup(
        attractor_id=d["attractor_id"], map_index=int(g["map_index"]),
        dmap=map_from_dict(g["map"]),
        fits={sid: model_from_dict(m) for sid, m in g["fits"].items()},
    ) for g in d["members"])
    return PredictorKey(
        attractor_id=d["attractor_id"], top_percent=int(d["top_percent"]),
        combiner=d["combiner"], lead=int(d["lead"]),
        stations=tuple(Station(*st) for st in d["stations"]),
        members=members, shrink_factor=float(d["shrink_factor"]),
        correlations={k: float(v) for k, v in d["correlations"].items()},
        vote_k=int(d["vote_k"]), vote_mode=d["vote_mode"],
        positive_part=bool(d.get("positive_part", False)))


def save_keys(keys: list[PredictorKey], path, header: dict | None = None) -> None:
    payload = {"format_version": KEY_FORMAT_VERSION,
               "header": header or {},
               "keys": [key_to_dict(k) for k in keys]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_keys(path) -> list[PredictorKey]:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != KEY_FORMAT_VERSION:
        raise ValueError("unsupported key file version")
    return [key_from_dict(d) for d in payload["keys"]]
