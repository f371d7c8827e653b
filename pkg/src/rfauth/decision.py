"""Outlier decisions, threshold fitting and ROC analysis on model scores."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

ARCHS = ("disc", "dclass", "ova")
THRESHOLD_CAP = 0.5
N_SIGMA = 3.0
ROC_POINTS = 1001


class Hypothesis(str, Enum):
    H0_AUTHORIZED = "H0_authorized"
    H1_OUTLIER = "H1_outlier"


@dataclass(frozen=True)
class ThresholdSpec:
    """Fitted decision threshold(s).

    For disc, ``gamma`` is the scalar cut on the outlier score ``z``. For ova,
    ``gamma`` holds one accept threshold per authorized class; class ``i``
    claims a frame when ``z_i > gamma_i``. ``margin`` is the clipped
    ``min(0.5, 3 sigma)`` band in the mirrored domain, so ova's
    ``gamma = 1 - margin``.
    """

    arch: str
    gamma: np.ndarray
    sigma: np.ndarray

    @property
    def margin(self) -> np.ndarray:
        return self.gamma if self.arch == "disc" else 1.0 - self.gamma

    def to_dict(self) -> dict:
        return {"arch": self.arch, "gamma": np.atleast_1d(self.gamma).tolist(),
                "sigma": np.atleast_1d(self.sigma).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdSpec":
        return cls(d["arch"], np.asarray(d["gamma"], dtype=float), np.asarray(d["sigma"], dtype=float))


@dataclass(frozen=True)
class Decision:
    hypothesis: Hypothesis
    predicted_class: int | None = None

    def __post_init__(self):
        if self.hypothesis is Hypothesis.H1_OUTLIER and self.predicted_class is not None:
            raise ValueError("an outlier decision carries no class")

    @property
    def is_outlier(self) -> bool:
        return self.hypothesis is Hypothesis.H1_OUTLIER


@dataclass(frozen=True)
class RocCurve:
    p_fa: np.ndarray
    p_d: np.ndarray
    gamma: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.p_fa.tolist(), self.p_d.tolist(), self.gamma.tolist()))


def _mirrored_sigma(deviation: np.ndarray) -> float:
    # zero-mean Gaussian MLE over {d} U {-d}
    return float(np.sqrt(np.mean(np.square(deviation))))


def _check_scores(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("no scores to fit a threshold on")
    if np.any((s < 0) | (s > 1)) or not np.all(np.isfinite(s)):
        raise ValueError("scores must lie in [0, 1]")
    return s


def fit_threshold_disc(authorized_train_scores) -> ThresholdSpec:
    s = _check_scores(authorized_train_scores)
    sigma = _mirrored_sigma(s)
    return ThresholdSpec("disc", np.asarray(min(THRESHOLD_CAP, N_SIGMA * sigma)), np.asarray(sigma))


def fit_threshold_ova(per_class_positive_scores, n_authorized: int | None = None) -> ThresholdSpec:
    """Per-class thresholds from each head's scores on its own training frames.

    ``per_class_positive_scores`` maps class index to scores (or is a sequence
    indexed by class). Scores are mirrored around their ideal value 1.
    """
    if not isinstance(per_class_positive_scores, dict):
        per_class_positive_scores = dict(enumerate(per_class_positive_scores))
    n = n_authorized if n_authorized is not None else len(per_class_positive_scores)
    missing = [i for i in range(n) if i not in per_class_positive_scores]
    if missing:
        raise ValueError(f"no training scores for authorized classes {missing}")
    sigma = np.array([_mirrored_sigma(1.0 - _check_scores(per_class_positive_scores[i])) for i in range(n)])
    margin = np.minimum(THRESHOLD_CAP, N_SIGMA * sigma)
    return ThresholdSpec("ova", 1.0 - margin, sigma)


def _argmax(z: np.ndarray) -> int:
    return int(np.argmax(z))  # numpy returns the first maximum


def decide(arch: str, z, t: ThresholdSpec | None = None) -> Decision:
    z = np.asarray(z, dtype=np.float64).ravel()
    if arch == "disc":
        if t is None or t.arch != "disc":
            raise ValueError("disc decisions need a disc threshold")
        if z.size != 1:
            raise ValueError(f"disc score must be a scalar, got length {z.size}")
        return Decision(Hypothesis.H1_OUTLIER if z[0] > float(t.gamma) else Hypothesis.H0_AUTHORIZED)
    if arch == "dclass":
        if z.size < 2:
            raise ValueError("dclass scores need at least one authorized class plus the outlier class")
        k = _argmax(z)
        if k == z.size - 1:
            return Decision(Hypothesis.H1_OUTLIER)
        return Decision(Hypothesis.H0_AUTHORIZED, k)
    if arch == "ova":
        if t is None or t.arch != "ova":
            raise ValueError("ova decisions need an ova threshold")
        gamma = np.atleast_1d(t.gamma)
        if gamma.size != z.size:
            raise ValueError(f"score length {z.size} does not match {gamma.size} thresholds")
        if np.all(z <= gamma):
            return Decision(Hypothesis.H1_OUTLIER)
        return Decision(Hypothesis.H0_AUTHORIZED, _argmax(z))
    raise ValueError(f"unknown arch {arch!r}")


def decide_batch(arch: str, Z, t: ThresholdSpec | None = None) -> np.ndarray:
    """Vectorized :func:`decide`: boolean outlier flag per row of ``Z``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if arch == "disc":
        return Z[:, 0] > float(t.gamma)
    if arch == "dclass":
        return Z.argmax(axis=1) == Z.shape[1] - 1
    if arch == "ova":
        return np.all(Z <= np.atleast_1d(t.gamma)[None, :], axis=1)
    raise ValueError(f"unknown arch {arch!r}")


def classify_authorized(z, arch: str) -> int:
    """Most likely authorized class, ignoring any outlier output."""
    z = np.asarray(z, dtype=np.float64)
    if arch == "disc":
        raise ValueError("disc does not classify authorized transmitters")
    if arch == "dclass":
        z = z[..., :-1]
    elif arch != "ova":
        raise ValueError(f"unknown arch {arch!r}")
    out = np.argmax(z, axis=-1)
    return int(out) if out.ndim == 0 else out


def outlier_scores(arch: str, Z) -> np.ndarray:
    """Scalar score per frame, larger meaning more outlier-like.

    dclass has no threshold; its outlier-class probability is used so an AUC
    can still be reported.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if arch == "disc":
        return Z[:, 0]
    if arch == "ova":
        return 1.0 - Z.max(axis=1)
    if arch == "dclass":
        return Z[:, -1]
    raise ValueError(f"unknown arch {arch!r}")


def roc_curve(scores, is_outlier, n_points: int = ROC_POINTS) -> RocCurve:
    """Scan a uniform threshold grid on ``[0, 1]``.

    At each ``gamma``, ``p_fa`` is the fraction of authorized frames and ``p_d``
    the fraction of outliers with score above ``gamma``. The AUC integrates
    ``p_d`` over ``p_fa`` by trapezoids, closing the curve at (1, 1) and (0, 0).
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(is_outlier, dtype=bool).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if y.all() or not y.any():
        raise ValueError("ROC needs both authorized and outlier frames")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    gamma = np.linspace(0.0, 1.0, n_points)
    auth, out = np.sort(s[~y]), np.sort(s[y])
    # fraction strictly above each gamma
    p_fa = 1.0 - np.searchsorted(auth, gamma, side="right") / auth.size
    p_d = 1.0 - np.searchsorted(out, gamma, side="right") / out.size
    x = np.concatenate([[1.0], p_fa, [0.0]])
    h = np.concatenate([[1.0], p_d, [0.0]])
    auc = float(np.sum((x[:-1] - x[1:]) * (h[:-1] + h[1:]) / 2))
    return RocCurve(p_fa, p_d, gamma, auc)


def balanced_accuracy(decisions, is_outlier, rng_seed: int | None = None, resample: bool = False) -> float:
    """Mean of the per-hypothesis accuracies, so an always-accept rule scores 0.5.

    ``decisions`` may be :class:`Decision` objects or boolean outlier flags.
    With ``resample=True`` the larger group is instead subsampled (seeded by
    ``rng_seed``) to the size of the smaller one and plain accuracy returned.
    """
    flags = np.array([d.is_outlier if isinstance(d, Decision) else bool(d) for d in decisions], dtype=bool)
    y = np.asarray(is_outlier, dtype=bool).ravel()
    if flags.shape != y.shape:
        raise ValueError("decisions and labels differ in length")
    if y.all() or not y.any():
        raise ValueError("balanced accuracy needs both authorized and outlier frames")
    if resample:
        rng = np.random.default_rng(rng_seed)
        pos, neg = np.flatnonzero(y), np.flatnonzero(~y)
        m = min(pos.size, neg.size)
        keep = np.concatenate([rng.choice(pos, m, replace=False), rng.choice(neg, m, replace=False)])
        return float(np.mean(flags[keep] == y[keep]))
    return float(0.5 * np.mean(~flags[~y]) + 0.5 * np.mean(flags[y]))
