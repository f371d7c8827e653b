"""scikit-learn estimator for open-set transmitter authorization."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .dataset import SetPartition, label_frames, normalize_frames
from .decision import balanced_accuracy, decide_batch, fit_threshold_disc, fit_threshold_ova, outlier_scores
from .models import ExtractorConfig, HeadConfig, TrainConfig, build_model, param_count, predict_scores, train
from .simulate import FRAME_LENGTH

OUTLIER = -1


def check_frames(X) -> np.ndarray:
    """Coerce frames to a complex ``(n, 256)`` array.

    Accepts complex ``(n, 256)`` or real ``(n, 256, 2)`` / ``(n, 2, 256)`` I/Q.
    """
    X = np.asarray(X)
    if not np.iscomplexobj(X):
        if X.ndim == 3 and X.shape[1:] == (FRAME_LENGTH, 2):
            X = X[..., 0] + 1j * X[..., 1]
        elif X.ndim == 3 and X.shape[1:] == (2, FRAME_LENGTH):
            X = X[:, 0] + 1j * X[:, 1]
        else:
            raise ValueError(f"real input must have shape (n, {FRAME_LENGTH}, 2) or (n, 2, {FRAME_LENGTH})")
    if X.ndim != 2 or X.shape[1] != FRAME_LENGTH:
        raise ValueError(f"expected frames of shape (n, {FRAME_LENGTH}), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("no frames given")
    if not np.all(np.isfinite(X)):
        raise ValueError("frames contain NaN or inf")
    return X.astype(np.complex64)


class OpenSetAuthorizer(ClassifierMixin, BaseEstimator):
    """Accept frames from an authorized set of transmitters and reject everything else.

    ``y`` holds transmitter ids. Frames whose id is not in ``authorized`` (or
    equals ``outlier_label`` when ``authorized`` is None) are known outliers.
    :meth:`predict` returns the authorized id for accepted frames and
    ``outlier_label`` for rejected ones; disc, which cannot tell authorized
    transmitters apart, returns 0 for accepted frames instead.

    Frames are normalized to unit power inside fit/predict.

    Parameters
    ----------
    arch : {"disc", "dclass", "ova"}
    authorized : sequence of int, optional
        Authorized transmitter ids, in class-index order.
    block_filters, kernel_size, feature_dim, batch_norm : extractor shape.
    hidden_width, l2_weight : classifier-block shape and dense L2 weight.
    epochs, learning_rate, batch_size : Adam training schedule.
    noise_variance : total variance of the augmentation noise.
    validation_fraction : share of ``X`` held out for checkpoint selection
        when ``fit`` is not given explicit validation data.
    random_state : int
    """

    def __init__(self, arch="ova", authorized=None, outlier_label=OUTLIER, block_filters=(32, 32, 64, 64),
                 kernel_size=3, feature_dim=1000, batch_norm=True, hidden_width=80, l2_weight=1e-3, epochs=10,
                 learning_rate=1e-3, batch_size=64, noise_variance=0.01, augment=True,
                 validation_fraction=0.2, random_state=0, verbose=False):
        self.arch = arch
        self.authorized = authorized
        self.outlier_label = outlier_label
        self.block_filters = block_filters
        self.kernel_size = kernel_size
        self.feature_dim = feature_dim
        self.batch_norm = batch_norm
        self.hidden_width = hidden_width
        self.l2_weight = l2_weight
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.noise_variance = noise_variance
        self.augment = augment
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.verbose = verbose

    def _partition(self, y):
        if self.authorized is not None:
            classes = np.asarray(list(self.authorized), dtype=np.int64)
        else:
            classes = np.unique(y[y != self.outlier_label])
        if classes.size == 0:
            raise ValueError("no authorized transmitters in y")
        known = set(np.unique(y).tolist()) - set(classes.tolist())
        return classes, SetPartition(tuple(classes.tolist()), frozenset(known))

    def fit(self, X, y, X_val=None, y_val=None):
        X = normalize_frames(check_frames(X))
        y = np.asarray(y, dtype=np.int64).ravel()
        if len(y) != len(X):
            raise ValueError("X and y differ in length")
        self.classes_, part = self._partition(y)
        seed = int(self.random_state or 0)

        if X_val is None:
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A]))
            order = rng.permutation(len(X))
            n_val = int(round(self.validation_fraction * len(X)))
            if n_val == 0 or n_val == len(X):
                raise ValueError("validation_fraction leaves an empty train or validation set")
            val_idx, tr_idx = order[:n_val], order[n_val:]
            X, X_val, y, y_val = X[tr_idx], X[val_idx], y[tr_idx], y[val_idx]
        else:
            X_val = normalize_frames(check_frames(X_val))
            y_val = np.asarray(y_val, dtype=np.int64).ravel()

        train_ds = label_frames(X, y, part, self.arch)
        val_ds = label_frames(X_val, y_val, part, self.arch)
        ec = ExtractorConfig(tuple(self.block_filters), self.kernel_size, self.feature_dim, self.batch_norm)
        hc = HeadConfig(self.arch, len(self.classes_), self.hidden_width, self.l2_weight)
        net = build_model(ec, hc, seed=seed)
        hyper = TrainConfig(self.epochs, self.learning_rate, self.batch_size, seed, self.augment,
                            self.noise_variance)
        self.model_ = train(net, train_ds, val_ds, hyper, log=print if self.verbose else None)
        self.history_ = list(self.model_.history)
        self.n_params_ = param_count(self.model_)

        # thresholds come from un-augmented training frames of authorized transmitters
        Z = predict_scores(self.model_, X)
        auth = train_ds.class_ids() < len(self.classes_)
        if self.arch == "disc":
            self.threshold_ = fit_threshold_disc(Z[auth, 0])
        elif self.arch == "ova":
            cls = train_ds.class_ids()
            self.threshold_ = fit_threshold_ova({i: Z[cls == i, i] for i in range(len(self.classes_))
                                                 if np.any(cls == i)}, len(self.classes_))
        else:
            self.threshold_ = None
        return self

    def predict_proba(self, X) -> np.ndarray:
        """Raw network outputs: ``(n, 1)`` disc, ``(n, |A|+1)`` dclass, ``(n, |A|)`` ova."""
        check_is_fitted(self, "model_")
        return predict_scores(self.model_, normalize_frames(check_frames(X)))

    def decision_function(self, X) -> np.ndarray:
        """Outlier score in [0, 1]; larger means less likely authorized."""
        return outlier_scores(self.arch, self.predict_proba(X))

    def predict_outlier(self, X) -> np.ndarray:
        return decide_batch(self.arch, self.predict_proba(X), getattr(self, "threshold_", None))

    def predict(self, X) -> np.ndarray:
        Z = self.predict_proba(X)
        outlier = decide_batch(self.arch, Z, self.threshold_)
        if self.arch == "disc":
            labels = np.zeros(len(Z), dtype=np.int64)
        else:
            labels = self.classes_[self.classify(Z)]
        return np.where(outlier, self.outlier_label, labels)

    def classify(self, Z) -> np.ndarray:
        """Closed-set class index over the authorized outputs only."""
        if self.arch == "disc":
            raise ValueError("disc does not classify authorized transmitters")
        Z = np.asarray(Z)
        return (Z[:, :-1] if self.arch == "dclass" else Z).argmax(axis=1)

    def score(self, X, y, sample_weight=None) -> float:
        """Balanced H0/H1 accuracy; frames with ids outside the authorized set count as outliers."""
        check_is_fitted(self, "model_")
        y = np.asarray(y).ravel()
        return balanced_accuracy(self.predict_outlier(X), ~np.isin(y, self.classes_))

    def __sklearn_is_fitted__(self):
        return hasattr(self, "model_")


__all__ = ["OpenSetAuthorizer", "check_frames", "NotFittedError", "OUTLIER"]
