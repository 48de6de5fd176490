"""Wind generation scenarios from clustered historical trajectories."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.cluster import KMeans


@dataclass(frozen=True)
class ScenarioSet:
    trajectories: np.ndarray  # (m, T) MWh
    weights: np.ndarray  # (m,)
    assignment: np.ndarray | None = None  # cluster label of each candidate

    def __post_init__(self):
        tr = np.atleast_2d(np.asarray(self.trajectories, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "trajectories", tr)
        object.__setattr__(self, "weights", w)
        if tr.shape[0] != len(w) or len(w) < 1:
            raise ValueError("one weight per trajectory required")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("scenario weights must be positive and sum to 1")
        if np.any(tr < 0) or not np.all(np.isfinite(tr)):
            raise ValueError("wind trajectories must be finite and non-negative")

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def T(self) -> int:
        return self.trajectories.shape[1]

    @classmethod
    def single(cls, trajectory) -> "ScenarioSet":
        return cls(np.atleast_2d(trajectory), np.ones(1))

    def expected(self) -> np.ndarray:
        return self.weights @ self.trajectories

    def head(self, T: int) -> "ScenarioSet":
        return ScenarioSet(self.trajectories[:, :T], self.weights, self.assignment)

    def check_capacity(self, capacity: float) -> None:
        if np.any(self.trajectories > capacity + 1e-9):
            raise ValueError("scenario exceeds the wind farm capacity")

    def to_csv(self, path) -> None:
        header = "scenario_id,weight," + ",".join(f"h{t}" for t in range(self.T))
        lines = [header]
        for s in range(self.m):
            vals = ",".join(repr(float(v)) for v in self.trajectories[s])
            lines.append(f"{s},{float(self.weights[s])!r},{vals}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "ScenarioSet":
        rows = [ln.split(",") for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        head, body = rows[0], rows[1:]
        if head[:2] != ["scenario_id", "weight"]:
            raise ValueError(f"{path}: expected scenario_id,weight,h0,... header")
        data = np.array([[float(v) for v in r[1:]] for r in body])
        return cls(data[:, 1:], data[:, 0])


def build_scenarios(candidates, m: int, wind_capacity: float | None = None, seed: int = 0) -> ScenarioSet:
    """Cluster candidate trajectories into ``m`` weighted centroid scenarios."""
    X = np.asarray(candidates, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty (N, T) array of candidate trajectories")
    N = X.shape[0]
    if m < 1 or N < m:
        raise ValueError(f"cannot build {m} scenarios from {N} candidates")
    if len(np.unique(X, axis=0)) < m:
        raise ValueError(f"fewer than {m} distinct candidate trajectories")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        km = KMeans(n_clusters=m, init="k-means++", n_init=10, random_state=seed).fit(X)
    labels = km.labels_.astype(int)
    # centroids recomputed from labels so they are exact cluster means
    cent = np.vstack([X[labels == k].mean(axis=0) for k in range(m)])
    hi = np.inf if wind_capacity is None else wind_capacity
    cent = np.clip(cent, 0.0, hi)
    weights = np.bincount(labels, minlength=m) / N
    return ScenarioSet(cent, weights, labels)


def silhouette_score(candidates, assignment) -> float:
    X = np.asarray(candidates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    lab = np.asarray(assignment)
    clusters = np.unique(lab)
    if len(clusters) < 2:
        raise ValueError("silhouette needs at least two clusters")
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1))
    member = lab[None, :] == clusters[:, None]  # (k, N)
    sizes = member.sum(axis=1)
    sums = D @ member.T  # (N, k) total distance to each cluster
    own = np.searchsorted(clusters, lab)
    n_own = sizes[own]
    a = np.where(n_own > 1, sums[np.arange(len(X)), own] / np.maximum(n_own - 1, 1), 0.0)
    other = sums / sizes[None, :]
    other[np.arange(len(X)), own] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[n_own == 1] = 0.0
    return float(s.mean())


def choose_scenario_count(candidates, m_range, seed: int = 0) -> int:
    X = np.asarray(candidates, dtype=float)
    m_range = sorted(set(int(m) for m in m_range))
    if not m_range or m_range[0] < 2 or m_range[-1] > len(X) - 1:
        raise ValueError(f"scenario counts must lie in [2, {len(X) - 1}]")
    best, best_score = None, -np.inf
    for m in m_range:
        score = silhouette_score(X, build_scenarios(X, m, seed=seed).assignment)
        if score > best_score + 1e-12:
            best, best_score = m, score
    return best
