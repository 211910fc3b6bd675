"""Bayesian linear regression of peak push force on obstacle features.

The posterior over weights is Gaussian and is kept in closed form, so a
stream of single-record conjugate updates reproduces the batch fit. When
the noise precision is not given, both precisions are set by evidence
maximization (MacKay's fixed point).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .features import ObstacleFeatures

SCHEMA_VERSION = 1

FEATURE_NAMES = (
    "position_x",
    "position_y",
    "position_z",
    "box_dx",
    "box_dy",
    "box_dz",
    "volume",
    "shape",
    "normal_x",
    "normal_y",
    "normal_z",
    "theta",
)

FEATURE_GROUPS = {
    "position_x": "position",
    "position_y": "position",
    "position_z": "position",
    "box_dx": "box",
    "box_dy": "box",
    "box_dz": "box",
    "volume": "volume",
    "shape": "shape",
    "normal_x": "normal",
    "normal_y": "normal",
    "normal_z": "normal",
    "theta": "theta",
}

GROUP_ORDER = ("position", "box", "volume", "shape", "normal", "theta")

PUSHABLE = "Pushable"
NOT_PUSHABLE = "NotPushable"


# ---------------------------------------------------------------------------
# Signals and records


@dataclass(frozen=True)
class ForceSignal:
    samples: np.ndarray  # (t, 3) newtons

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(s)):
            raise ValueError("force samples must be finite")
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.samples, axis=1)


def fmax(signal: ForceSignal) -> float:
    """Largest Euclidean norm over the samples."""
    if len(signal) == 0:
        raise ValueError("empty force signal")
    return float(signal.magnitudes.max())


def feature_vector(f: ObstacleFeatures) -> np.ndarray:
    if f.mean_normal is None or f.theta is None:
        raise ValueError("obstacle has no surface normal; cannot build a regression input")
    return np.concatenate(
        [f.centroid, f.box_dims, [f.volume, f.shape], f.mean_normal, [f.theta]]
    ).astype(float)


@dataclass
class PushRecord:
    features: np.ndarray
    f_max: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(-1)
        if len(self.features) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(self.features)}")
        if not self.f_max >= 0:
            raise ValueError("f_max must be non-negative")

    def to_dict(self) -> dict:
        d = {
            "features": {k: float(v) for k, v in zip(FEATURE_NAMES, self.features)},
            "f_max": float(self.f_max),
        }
        if self.meta:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PushRecord":
        feats = d["features"]
        if isinstance(feats, dict):
            missing = [k for k in FEATURE_NAMES if k not in feats]
            if missing:
                raise ValueError(f"record lacks features {missing}")
            vec = [feats[k] for k in FEATURE_NAMES]
        else:
            vec = feats
        return cls(np.asarray(vec, dtype=float), float(d["f_max"]), dict(d.get("meta", {})))


def write_records(records: Iterable[PushRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_records(path) -> list[PushRecord]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(PushRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record: {exc}") from exc
    return out


def split_dataset(records: Sequence, test_fraction: float = 0.30, seed: int = 0):
    """Seeded shuffle, then ``ceil(n * test_fraction)`` records go to test."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    n = len(records)
    if n < 2:
        raise ValueError("need at least 2 records to split")
    n_test = math.ceil(n * test_fraction - 1e-9)
    perm = np.random.default_rng(seed).permutation(n)
    test = [records[i] for i in perm[:n_test]]
    train = [records[i] for i in perm[n_test:]]
    return train, test


def design_matrix(records: Sequence[PushRecord]) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        return np.zeros((0, len(FEATURE_NAMES))), np.zeros(0)
    X = np.vstack([r.features for r in records])
    y = np.array([r.f_max for r in records], dtype=float)
    return X, y


# ---------------------------------------------------------------------------
# Standardization


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray  # zero-variance columns, mapped to 0

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or len(X) == 0:
            raise ValueError("need a non-empty 2D array to fit a standardizer")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        degenerate = ~(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
        std = np.where(degenerate, 1.0, std)
        return cls(mean, std, degenerate)

    def transform(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.std
        Z[..., self.degenerate] = 0.0
        return Z

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "degenerate": [bool(v) for v in self.degenerate],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float), np.asarray(d["degenerate"], bool))


# ---------------------------------------------------------------------------
# Posterior


@dataclass(frozen=True)
class PosteriorModel:
    """Gaussian posterior N(weight_mean, weight_cov) over regression weights.

    With ``fit_bias`` the first weight multiplies a constant 1 column.
    ``precision`` and ``shift`` (precision times mean) are carried so that
    sequential updates stay in information form.
    """

    weight_mean: np.ndarray
    weight_cov: np.ndarray
    prior_precision: float
    noise_precision: float
    fit_bias: bool = True
    precision: Optional[np.ndarray] = field(default=None, repr=False)
    shift: Optional[np.ndarray] = field(default=None, repr=False)
    n_obs: int = 0

    @property
    def dim(self) -> int:
        return len(self.weight_mean)

    def augment(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.fit_bias:
            X = np.hstack([np.ones((len(X), 1)), X])
        if X.shape[1] != self.dim:
            raise ValueError(f"feature dimension {X.shape[1]} does not match model {self.dim}")
        return X

    def information(self) -> tuple[np.ndarray, np.ndarray]:
        P = self.precision if self.precision is not None else np.linalg.inv(self.weight_cov)
        b = self.shift if self.shift is not None else P @ self.weight_mean
        return P, b


def prior_model(n_features: int, lam: float = 1e-6, alpha: float = 1.0, fit_bias: bool = True) -> PosteriorModel:
    """Zero-data posterior: mean 0, covariance I / lam."""
    if not lam > 0 or not alpha > 0:
        raise ValueError("precisions must be positive")
    d = n_features + (1 if fit_bias else 0)
    return PosteriorModel(
        weight_mean=np.zeros(d),
        weight_cov=np.eye(d) / lam,
        prior_precision=float(lam),
        noise_precision=float(alpha),
        fit_bias=fit_bias,
        precision=np.eye(d) * lam,
        shift=np.zeros(d),
    )


def _posterior(Phi, y, lam, alpha):
    P = lam * np.eye(Phi.shape[1]) + alpha * (Phi.T @ Phi)
    b = alpha * (Phi.T @ y)
    cov = np.linalg.inv(P)
    cov = 0.5 * (cov + cov.T)
    mean = np.linalg.solve(P, b)
    return P, b, cov, mean


def evidence_maximization(Phi, y, lam=1e-6, alpha=None, max_iter=300, tol=1e-6):
    """Fixed-point re-estimation of (lam, alpha) maximizing the marginal likelihood."""
    n, d = Phi.shape
    eig, V = np.linalg.eigh(Phi.T @ Phi)
    eig = np.clip(eig, 0.0, None)
    proj = V.T @ (Phi.T @ y)
    if alpha is None:
        var = float(np.var(y))
        alpha = 1.0 / var if var > 0 else 1.0
    for _ in range(max_iter):
        m = V @ (alpha * proj / (lam + alpha * eig))
        gamma = float(np.sum(alpha * eig / (lam + alpha * eig)))
        resid = float(np.sum((y - Phi @ m) ** 2))
        mm = float(m @ m)
        new_lam = gamma / mm if mm > 0 else lam
        new_alpha = (n - gamma) / resid if resid > 0 and n > gamma else 1e12
        new_lam = min(max(new_lam, 1e-12), 1e12)
        new_alpha = min(max(new_alpha, 1e-12), 1e12)
        done = abs(new_lam - lam) <= tol * lam and abs(new_alpha - alpha) <= tol * alpha
        lam, alpha = new_lam, new_alpha
        if done:
            break
    return lam, alpha


def fit_batch(
    X,
    y,
    lam: float = 1e-6,
    alpha: Optional[float] = None,
    fit_bias: bool = True,
) -> PosteriorModel:
    """Closed-form posterior: cov = (lam I + alpha X'X)^-1, mean = alpha cov X'y.

    ``X`` is expected to be standardized already. With ``alpha=None`` both
    precisions are estimated from the data, starting from ``lam``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim == 1:
        X = X.reshape(len(y), -1) if len(y) else X.reshape(0, -1)
    n_feat = X.shape[1]
    if len(X) == 0:
        return prior_model(n_feat, lam, 1.0 if alpha is None else alpha, fit_bias)
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    Phi = np.hstack([np.ones((len(X), 1)), X]) if fit_bias else X
    if alpha is None:
        lam, alpha = evidence_maximization(Phi, y, lam)
    if not lam > 0 or not alpha > 0:
        raise ValueError("precisions must be positive")
    P, b, cov, mean = _posterior(Phi, y, lam, alpha)
    return PosteriorModel(mean, cov, float(lam), float(alpha), fit_bias, P, b, len(X))


def update_sequential(model: PosteriorModel, x, y: float) -> PosteriorModel:
    """One exact conjugate update with a single (standardized) observation."""
    phi = model.augment(x)[0]
    P, b = model.information()
    a = model.noise_precision
    P = P + a * np.outer(phi, phi)
    b = b + a * phi * float(y)
    cov = np.linalg.inv(P)
    cov = 0.5 * (cov + cov.T)
    mean = np.linalg.solve(P, b)
    return replace(model, weight_mean=mean, weight_cov=cov, precision=P, shift=b, n_obs=model.n_obs + 1)


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float
    p_pushable: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def predict(model: PosteriorModel, x, max_force: float = 20.0) -> Prediction:
    phi = model.augment(x)[0]
    mean = float(model.weight_mean @ phi)
    var = 1.0 / model.noise_precision + float(phi @ model.weight_cov @ phi)
    return Prediction(mean, var, normal_cdf((max_force - mean) / math.sqrt(var)))


def predict_many(model: PosteriorModel, X) -> tuple[np.ndarray, np.ndarray]:
    Phi = model.augment(X)
    mean = Phi @ model.weight_mean
    var = 1.0 / model.noise_precision + np.einsum("ij,jk,ik->i", Phi, model.weight_cov, Phi)
    return mean, var


def decide(prediction: Prediction, max_force: float = 20.0) -> str:
    return PUSHABLE if prediction.mean <= max_force else NOT_PUSHABLE


# ---------------------------------------------------------------------------
# Reporting and persistence


@dataclass(frozen=True)
class CoefficientReport:
    weights: list  # (feature, group, weight)
    groups: dict  # group -> (magnitude, signed sum)

    def magnitude(self, group: str) -> float:
        return self.groups[group][0]

    def signed(self, group: str) -> float:
        return self.groups[group][1]

    def feature_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "group", "weight"])
        for name, group, weight in self.weights:
            w.writerow([name, group, repr(float(weight))])
        return buf.getvalue()

    def group_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "magnitude", "signed_sum"])
        for g in GROUP_ORDER:
            if g in self.groups:
                mag, tot = self.groups[g]
                w.writerow([g, repr(float(mag)), repr(float(tot))])
        return buf.getvalue()


def coefficient_report(model: PosteriorModel, feature_names: Sequence[str] = FEATURE_NAMES) -> CoefficientReport:
    """Per-feature standardized weights and per-group L2 magnitude / signed sum."""
    w = model.weight_mean[1:] if model.fit_bias else model.weight_mean
    if len(w) != len(feature_names):
        raise ValueError("feature names do not match model dimension")
    rows = [(n, FEATURE_GROUPS.get(n, n), float(v)) for n, v in zip(feature_names, w)]
    groups = {}
    for g in GROUP_ORDER:
        vals = np.array([v for _, gg, v in rows if gg == g])
        if len(vals):
            groups[g] = (float(np.linalg.norm(vals)), float(vals.sum()))
    return CoefficientReport(rows, groups)


@dataclass(frozen=True)
class TrainedModel:
    posterior: PosteriorModel
    standardizer: Standardizer
    feature_names: tuple = FEATURE_NAMES

    def predict(self, raw_features, max_force: float = 20.0) -> Prediction:
        z = self.standardizer.transform(np.asarray(raw_features, dtype=float).reshape(1, -1))
        return predict(self.posterior, z, max_force)

    def to_dict(self) -> dict:
        p = self.posterior
        return {
            "schema_version": SCHEMA_VERSION,
            "feature_names": list(self.feature_names),
            "fit_bias": p.fit_bias,
            "standardizer": self.standardizer.to_dict(),
            "prior_precision": p.prior_precision,
            "noise_precision": p.noise_precision,
            "n_obs": p.n_obs,
            "weight_mean": [float(v) for v in p.weight_mean],
            "weight_cov": [float(v) for v in p.weight_cov.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema {d.get('schema_version')!r}")
        mean = np.asarray(d["weight_mean"], float)
        cov = np.asarray(d["weight_cov"], float).reshape(len(mean), len(mean))
        post = PosteriorModel(
            mean, cov, float(d["prior_precision"]), float(d["noise_precision"]), bool(d["fit_bias"]), n_obs=int(d["n_obs"])
        )
        return cls(post, Standardizer.from_dict(d["standardizer"]), tuple(d["feature_names"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train(records: Sequence[PushRecord], lam: float = 1e-6, alpha: Optional[float] = None) -> TrainedModel:
    """Standardize on ``records`` and fit the posterior."""
    if not records:
        raise ValueError("no training records")
    X, y = design_matrix(records)
    scaler = Standardizer.fit(X)
    post = fit_batch(scaler.transform(X), y, lam, alpha)
    return TrainedModel(post, scaler)
