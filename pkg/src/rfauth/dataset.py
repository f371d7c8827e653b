"""Authorized / known-outlier / unseen-outlier partitions, splits and labels."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .io import write_json
from .simulate import FRAME_LENGTH, Corpus, IQFrame

SCHEMES = ("disc", "dclass", "ova")
TRAINVAL_FRACTION = 0.7
TRAIN_FRACTION = 0.8
AUGMENT_NOISE_VARIANCE = 0.01


@dataclass(frozen=True)
class SetPartition:
    authorized: tuple[int, ...]
    known_outliers: frozenset[int] = frozenset()
    unseen_outliers: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "authorized", tuple(int(t) for t in self.authorized))
        object.__setattr__(self, "known_outliers", frozenset(int(t) for t in self.known_outliers))
        object.__setattr__(self, "unseen_outliers", frozenset(int(t) for t in self.unseen_outliers))
        a = set(self.authorized)
        if not a:
            raise ValueError("authorized set must be nonempty")
        if len(a) != len(self.authorized):
            raise ValueError("authorized set contains duplicates")
        if a & self.known_outliers or a & self.unseen_outliers or self.known_outliers & self.unseen_outliers:
            raise ValueError("authorized, known and unseen sets must be pairwise disjoint")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.authorized), len(self.known_outliers), len(self.unseen_outliers)

    def to_dict(self) -> dict:
        return {"authorized": list(self.authorized), "known_outliers": sorted(self.known_outliers),
                "unseen_outliers": sorted(self.unseen_outliers)}


@dataclass
class LabeledDataset:
    """Frames with per-scheme training labels.

    ``labels`` is ``(n,)`` for disc (0 authorized / 1 outlier) and dclass
    (class index, ``n_authorized`` for outliers), ``(n, n_authorized)`` for ova.
    """

    X: np.ndarray
    tx_ids: np.ndarray
    labels: np.ndarray
    scheme: str
    n_authorized: int
    class_weights: dict[int, float] = field(default_factory=dict)
    frame_index: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.X)

    def class_ids(self) -> np.ndarray:
        """Per-frame class used for weighting (ova: authorized index, or ``n_authorized`` for outliers)."""
        if self.scheme == "ova":
            return np.where(self.labels.any(axis=1), self.labels.argmax(axis=1), self.n_authorized)
        return self.labels

    def sample_weights(self) -> np.ndarray:
        cls = self.class_ids()
        return np.array([self.class_weights.get(int(c), 1.0) for c in cls], dtype=np.float64)

    @property
    def frames(self) -> list[IQFrame]:
        return [IQFrame(x, int(t), np.nan) for x, t in zip(self.X, self.tx_ids)]


@dataclass
class SplitBundle:
    train: LabeledDataset | None
    val: LabeledDataset | None
    partition: SetPartition
    # raw (unlabeled) split members, referenced as (tx_id, frame index in the corpus)
    train_refs: np.ndarray
    val_refs: np.ndarray
    test_refs: np.ndarray
    test_X: np.ndarray
    test_is_outlier: np.ndarray
    seed: int = 0

    @property
    def test_frames(self) -> list[IQFrame]:
        return [IQFrame(x, int(t), np.nan) for x, (t, _) in zip(self.test_X, self.test_refs)]

    def to_manifest(self) -> dict:
        return {
            "seed": self.seed,
            "partition": self.partition.to_dict(),
            "train": self.train_refs.tolist(),
            "val": self.val_refs.tolist(),
            "test": self.test_refs.tolist(),
        }


def partition_transmitters(pool, sizes: tuple[int, int, int], rng_seed: int) -> SetPartition:
    """Draw disjoint authorized / known / unseen sets from ``pool``.

    Authorized transmitters come from the front of one random permutation and
    unseen outliers from its back, so for a fixed seed, sweeping one set size
    leaves the other sets as nested draws of the same permutation.
    """
    pool = sorted(int(t) for t in pool)
    n_a, n_k, n_o = sizes
    if min(sizes) < 0 or n_a < 1:
        raise ValueError(f"invalid set sizes {sizes}")
    if n_a + n_k + n_o > len(pool):
        raise ValueError(f"sizes {sizes} exceed pool of {len(pool)} transmitters")
    perm = np.random.default_rng(np.random.SeedSequence([rng_seed, 0xA0])).permutation(pool)
    authorized = perm[:n_a]
    known = perm[n_a:n_a + n_k]
    unseen = perm[len(perm) - n_o:] if n_o else []
    return SetPartition(tuple(authorized), frozenset(known), frozenset(unseen))


def make_splits(corpus: Corpus, part: SetPartition, rng_seed: int, scheme: str | None = None) -> SplitBundle:
    """70/30 trainval/test split per authorized transmitter; trainval 80/20 train/val.

    The 80/20 split is stratified per transmitter, then each split is shuffled.
    Unseen outliers go entirely to test. If ``scheme`` is given, train and val
    are labeled for it.
    """
    missing = [t for t in (*part.authorized, *part.known_outliers, *part.unseen_outliers)
               if t not in corpus.samples]
    if missing:
        raise KeyError(f"corpus has no frames for transmitters {sorted(missing)}")
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0xB0]))

    def refs(tx, idx):
        return np.column_stack([np.full(len(idx), tx), idx]).astype(np.int64)

    train, val, test = [], [], []
    for tx in (*part.authorized, *sorted(part.known_outliers)):
        n = len(corpus.samples[tx])
        idx = rng.permutation(n)
        n_tv = int(round(TRAINVAL_FRACTION * n)) if tx in part.authorized else n
        tv, te = idx[:n_tv], idx[n_tv:]
        n_tr = int(round(TRAIN_FRACTION * len(tv)))
        train.append(refs(tx, tv[:n_tr]))
        val.append(refs(tx, tv[n_tr:]))
        if len(te):
            test.append(refs(tx, te))
    for tx in sorted(part.unseen_outliers):
        test.append(refs(tx, np.arange(len(corpus.samples[tx]))))

    empty = np.zeros((0, 2), dtype=np.int64)
    train_refs = rng.permutation(np.concatenate(train)) if train else empty
    val_refs = rng.permutation(np.concatenate(val)) if val else empty
    test_refs = np.concatenate(test) if test else empty
    test_X = gather(corpus, test_refs)
    is_outlier = np.isin(test_refs[:, 0], list(part.unseen_outliers))

    bundle = SplitBundle(None, None, part, train_refs, val_refs, test_refs, test_X, is_outlier, rng_seed)
    if scheme is not None:
        bundle.train = label_frames(gather(corpus, train_refs), train_refs[:, 0], part, scheme, train_refs[:, 1])
        bundle.val = label_frames(gather(corpus, val_refs), val_refs[:, 0], part, scheme, val_refs[:, 1])
    return bundle


def gather(corpus: Corpus, refs: np.ndarray) -> np.ndarray:
    """Stack the corpus frames named by ``(tx_id, index)`` rows."""
    if len(refs) == 0:
        return np.zeros((0, FRAME_LENGTH), dtype=np.complex64)
    return np.stack([corpus.samples[int(t)][int(i)] for t, i in refs])


def write_split_manifest(bundle: SplitBundle, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_json(path, bundle.to_manifest())
    return path


def normalize_frames(X: np.ndarray) -> np.ndarray:
    """Scale each row to unit mean power."""
    X = np.asarray(X)
    power = np.mean(np.abs(X.astype(np.complex128)) ** 2, axis=-1, keepdims=True)
    if np.any(power == 0):
        raise ValueError("cannot normalize an all-zero frame")
    return (X / np.sqrt(power)).astype(X.dtype if np.iscomplexobj(X) else np.complex128)


def normalize_frame(f: IQFrame) -> IQFrame:
    return IQFrame(normalize_frames(f.samples[None, :].astype(np.complex128))[0], f.tx_id, f.snr_db)


def augment_frames(X: np.ndarray, rng: np.random.Generator, noise_variance: float = AUGMENT_NOISE_VARIANCE,
                   noise: bool = True) -> np.ndarray:
    """Add circular Gaussian noise of total variance ``noise_variance``, then rotate by a uniform phase."""
    X = np.asarray(X)
    out = X.astype(np.complex128)
    if noise and noise_variance > 0:
        scale = np.sqrt(noise_variance / 2)
        out = out + scale * (rng.normal(size=X.shape) + 1j * rng.normal(size=X.shape))
    theta = rng.uniform(0.0, 2 * np.pi, size=X.shape[:-1] + (1,))
    return (out * np.exp(1j * theta)).astype(X.dtype if np.iscomplexobj(X) else np.complex128)


def augment(f: IQFrame, rng_seed: int, noise_variance: float = AUGMENT_NOISE_VARIANCE,
            noise: bool = True) -> IQFrame:
    rng = np.random.default_rng(rng_seed)
    y = augment_frames(f.samples[None, :].astype(np.complex128), rng, noise_variance, noise)[0]
    return IQFrame(y, f.tx_id, f.snr_db)


def label_frames(X, tx_ids, part: SetPartition, scheme: str, frame_index=None) -> LabeledDataset:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    X = np.asarray(X)
    tx_ids = np.asarray(tx_ids, dtype=np.int64)
    if np.isin(tx_ids, list(part.unseen_outliers)).any():
        raise ValueError("frames from unseen outliers cannot be given training labels")
    index_of = {t: i for i, t in enumerate(part.authorized)}
    stray = set(tx_ids.tolist()) - set(index_of) - part.known_outliers
    if stray:
        raise ValueError(f"transmitters {sorted(stray)} are in neither the authorized nor known-outlier set")
    n_a = len(part.authorized)
    cls = np.array([index_of.get(int(t), n_a) for t in tx_ids], dtype=np.int64)
    if scheme == "disc":
        labels = (cls == n_a).astype(np.int64)
    elif scheme == "dclass":
        labels = cls
    else:
        labels = np.zeros((len(cls), n_a), dtype=np.int64)
        rows = np.flatnonzero(cls < n_a)
        labels[rows, cls[rows]] = 1
    ds = LabeledDataset(X, tx_ids, labels, scheme, n_a, frame_index=frame_index)
    if len(ds):
        ds.class_weights = class_weights(ds)
    return ds


def class_weights(ds: LabeledDataset) -> dict[int, float]:
    """``N / (n_classes * N_c)`` over the classes present in ``ds``.

    Classes the scheme defines but ``ds`` lacks (e.g. the outlier class when no
    known outliers exist) are left out rather than given a weight.
    """
    cls = ds.class_ids()
    if len(cls) == 0:
        raise ValueError("cannot weight an empty dataset")
    present, counts = np.unique(cls, return_counts=True)
    total, k = counts.sum(), len(present)
    return {int(c): float(total / (k * n)) for c, n in zip(present, counts)}


def ova_output_weights(labels) -> np.ndarray:
    """Per-head ``(2, |A|)`` weights for ova: row 0 negatives, row 1 positives.

    Each head is its own binary problem, so the ``N / (n_classes * N_c)`` rule
    is applied per output over the label values that head actually sees.
    """
    L = np.asarray(labels, dtype=bool)
    if L.ndim != 2 or len(L) == 0:
        raise ValueError("expected a nonempty (n, |A|) ova label matrix")
    n = len(L)
    pos = L.sum(axis=0).astype(float)
    neg = n - pos
    present = (pos > 0).astype(int) + (neg > 0)
    with np.errstate(divide="ignore"):
        w = np.stack([n / (present * neg), n / (present * pos)])
    return np.where(np.isfinite(w), w, 1.0)


def sample_output_weights(labels, table) -> np.ndarray:
    """Expand an :func:`ova_output_weights` table to per-frame, per-head weights."""
    L = np.asarray(labels, dtype=bool)
    return np.where(L, table[1], table[0])


class FrameNormalizer(TransformerMixin, BaseEstimator):
    """Stateless per-frame unit-power scaling, usable inside a Pipeline."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return normalize_frames(np.asarray(X))
