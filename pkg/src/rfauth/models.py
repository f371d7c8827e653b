"""Residual feature extractor with Disc, DClass and OvA heads (PyTorch)."""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .dataset import (AUGMENT_NOISE_VARIANCE, LabeledDataset, augment_frames, ova_output_weights,
                      sample_output_weights)
from .simulate import FRAME_LENGTH, IQFrame

ARCHS = ("disc", "dclass", "ova")
UNIT_POWER_TOL = 1e-3


@dataclass(frozen=True)
class ExtractorConfig:
    block_filters: tuple[int, ...] = (32, 32, 64, 64)
    kernel_size: int = 3
    feature_dim: int = 1000
    batch_norm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "block_filters", tuple(int(f) for f in self.block_filters))
        if not self.block_filters or min(self.block_filters) <= 0:
            raise ValueError("block_filters must be a nonempty list of positive ints")
        if self.kernel_size <= 0 or self.feature_dim <= 0:
            raise ValueError("kernel_size and feature_dim must be positive")


@dataclass(frozen=True)
class HeadConfig:
    arch: str
    n_authorized: int
    hidden_width: int = 80
    l2_weight: float = 1e-3

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.n_authorized < 1 or self.hidden_width < 1 or self.l2_weight < 0:
            raise ValueError("need n_authorized >= 1, hidden_width >= 1, l2_weight >= 0")

    @property
    def output_width(self) -> int:
        return {"disc": 1, "dclass": self.n_authorized + 1, "ova": self.n_authorized}[self.arch]


@dataclass
class TrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    augment: bool = True
    noise_variance: float = AUGMENT_NOISE_VARIANCE


class ResidualBlock(nn.Module):
    """1x1 projection, conv-ReLU-conv with identity skip, ReLU, then /2 max-pooling."""

    def __init__(self, in_channels: int, filters: int, kernel_size: int, batch_norm: bool = False):
        super().__init__()
        pad = kernel_size // 2
        self.project = nn.Conv1d(in_channels, filters, 1)
        self.conv1 = nn.Conv1d(filters, filters, kernel_size, padding=pad)
        self.conv2 = nn.Conv1d(filters, filters, kernel_size, padding=pad)
        self.norm1 = nn.BatchNorm1d(filters) if batch_norm else nn.Identity()
        self.norm2 = nn.BatchNorm1d(filters) if batch_norm else nn.Identity()
        self.pool = nn.MaxPool1d(2)

    def forward(self, x):
        x = self.project(x)
        h = self.norm2(self.conv2(F.relu(self.norm1(self.conv1(x)))))
        return self.pool(F.relu(h[..., :x.shape[-1]] + x))


class FeatureExtractor(nn.Module):
    def __init__(self, cfg: ExtractorConfig):
        super().__init__()
        blocks, c = [], 2
        for f in cfg.block_filters:
            blocks.append(ResidualBlock(c, f, cfg.kernel_size, cfg.batch_norm))
            c = f
        self.blocks = nn.Sequential(*blocks)
        self.dense = nn.Linear(c * (FRAME_LENGTH >> len(blocks)), cfg.feature_dim)

    def forward(self, x):
        h = self.blocks(x).flatten(1)
        return F.relu(self.dense(h))


class ClassifierBlock(nn.Module):
    def __init__(self, in_features: int, hidden: int, outputs: int):
        super().__init__()
        self.hidden = nn.Linear(in_features, hidden)
        self.out = nn.Linear(hidden, outputs)

    def forward(self, x):
        return self.out(F.relu(self.hidden(x)))


class OpenSetNet(nn.Module):
    """Shared extractor feeding one classifier block (disc, dclass) or one per class (ova).

    ``forward`` takes ``(n, 2, 256)`` I/Q channels and returns logits of width
    1, ``|A| + 1`` or ``|A|``.
    """

    def __init__(self, ec: ExtractorConfig, hc: HeadConfig):
        super().__init__()
        self.extractor_config, self.head_config = ec, hc
        self.extractor = FeatureExtractor(ec)
        n_blocks = hc.n_authorized if hc.arch == "ova" else 1
        width = 1 if hc.arch == "ova" else hc.output_width
        self.heads = nn.ModuleList(ClassifierBlock(ec.feature_dim, hc.hidden_width, width) for _ in range(n_blocks))

    @property
    def arch(self) -> str:
        return self.head_config.arch

    def forward(self, x):
        feats = self.extractor(x)
        return torch.cat([head(feats) for head in self.heads], dim=1)

    def probabilities(self, logits):
        return F.softmax(logits, dim=1) if self.arch == "dclass" else torch.sigmoid(logits)

    def l2_penalty(self):
        # classifier-block dense kernels only
        return sum((m.weight ** 2).sum() for m in self.heads.modules() if isinstance(m, nn.Linear))


@dataclass
class TrainedModel:
    net: OpenSetNet
    best_val_loss: float = math.inf
    history: list[tuple[float, float]] = field(default_factory=list)
    initial_val_loss: float = math.nan
    best_epoch: int = -1

    @property
    def arch(self) -> str:
        return self.net.arch

    @property
    def extractor_config(self) -> ExtractorConfig:
        return self.net.extractor_config

    @property
    def head_config(self) -> HeadConfig:
        return self.net.head_config


@dataclass(frozen=True)
class ScoreVector:
    values: np.ndarray
    arch: str


def build_model(ec: ExtractorConfig | None = None, hc: HeadConfig | None = None, seed: int = 0) -> OpenSetNet:
    if hc is None:
        raise ValueError("a HeadConfig is required")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return OpenSetNet(ec or ExtractorConfig(), hc)


def param_count(model) -> int:
    net = model.net if isinstance(model, TrainedModel) else model
    return sum(p.numel() for p in net.parameters() if p.requires_grad)


def to_channels(X, dtype=torch.float32) -> torch.Tensor:
    """Complex ``(n, 256)`` frames to a real ``(n, 2, 256)`` tensor."""
    X = np.asarray(X)
    return torch.from_numpy(np.stack([X.real, X.imag], axis=1)).to(dtype)


def weighted_loss(net: OpenSetNet, logits, labels, weights, include_l2: bool = True):
    """Class-weighted cross-entropy plus the dense-layer L2 term.

    disc and ova use binary cross-entropy per output, dclass categorical
    cross-entropy. ``weights`` is per frame, or ``(n, |A|)`` per frame and head
    for ova, whose weighted head losses are summed.
    """
    weights = weights.to(logits.dtype)
    if net.arch == "dclass":
        per_sample = F.cross_entropy(logits, labels.long(), reduction="none")
    elif net.arch == "disc":
        per_sample = F.binary_cross_entropy_with_logits(logits[:, 0], labels.to(logits.dtype), reduction="none")
    else:
        per_out = F.binary_cross_entropy_with_logits(logits, labels.to(logits.dtype), reduction="none")
        if weights.ndim == 1:
            weights = weights[:, None]
        per_sample, weights = (per_out * weights).sum(dim=1), torch.ones((), dtype=logits.dtype)
    loss = (per_sample * weights).mean()
    if include_l2 and net.head_config.l2_weight > 0:
        loss = loss + net.head_config.l2_weight * net.l2_penalty()
    return loss


def _check_scheme(net: OpenSetNet, ds: LabeledDataset, name: str):
    if len(ds) == 0:
        raise ValueError(f"{name} dataset is empty")
    if ds.scheme != net.arch:
        raise ValueError(f"{name} dataset is labeled for {ds.scheme!r} but the model is {net.arch!r}")
    if ds.n_authorized != net.head_config.n_authorized:
        raise ValueError(f"{name} dataset has {ds.n_authorized} authorized classes, model expects "
                         f"{net.head_config.n_authorized}")


@torch.no_grad()
def _eval_loss(net: OpenSetNet, X: torch.Tensor, labels, weights, batch_size: int) -> float:
    net.eval()
    total = 0.0
    for i in range(0, len(X), batch_size):
        sl = slice(i, i + batch_size)
        logits = net(X[sl])
        total += float(weighted_loss(net, logits, labels[sl], weights[sl], include_l2=False)) * len(logits)
    return total / len(X) + net.head_config.l2_weight * float(net.l2_penalty())


def train(model: OpenSetNet | TrainedModel, train_ds: LabeledDataset, val_ds: LabeledDataset,
          hyper: TrainConfig | None = None, log=None) -> TrainedModel:
    """Adam on the class-weighted loss; keep the weights of the lowest validation loss.

    Training frames are augmented afresh every epoch; validation frames are
    used as given. Class weights come from the training set for both; ova
    weights each head's positives and negatives separately.
    """
    hyper = hyper or TrainConfig()
    net = model.net if isinstance(model, TrainedModel) else model
    _check_scheme(net, train_ds, "training")
    _check_scheme(net, val_ds, "validation")
    if hyper.epochs < 0 or hyper.batch_size < 1:
        raise ValueError("epochs must be >= 0 and batch_size >= 1")

    if net.arch == "ova":
        table = ova_output_weights(train_ds.labels)
        weights_of = lambda ds: torch.from_numpy(sample_output_weights(ds.labels, table))
    else:
        weights_of = lambda ds: torch.tensor([train_ds.class_weights.get(int(c), 1.0) for c in ds.class_ids()])
    y_tr, w_tr = torch.from_numpy(train_ds.labels), weights_of(train_ds)
    X_val, y_val, w_val = to_channels(val_ds.X), torch.from_numpy(val_ds.labels), weights_of(val_ds)

    rng = np.random.default_rng(np.random.SeedSequence([hyper.seed, 0xE0]))
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(hyper.seed)
        opt = torch.optim.Adam(net.parameters(), lr=hyper.lr)
        result = TrainedModel(net)
        result.initial_val_loss = _eval_loss(net, X_val, y_val, w_val, 256)
        best_state = copy.deepcopy(net.state_dict())
        for epoch in range(hyper.epochs):
            net.train()
            order = rng.permutation(len(train_ds))
            X_ep = train_ds.X[order]
            if hyper.augment:
                X_ep = augment_frames(X_ep, rng, hyper.noise_variance)
            X_ep = to_channels(X_ep)
            y_ep, w_ep = y_tr[order], w_tr[order]
            running = 0.0
            for i in range(0, len(order), hyper.batch_size):
                sl = slice(i, i + hyper.batch_size)
                opt.zero_grad()
                loss = weighted_loss(net, net(X_ep[sl]), y_ep[sl], w_ep[sl])
                loss.backward()
                opt.step()
                running += loss.item() * len(y_ep[sl])
            val_loss = _eval_loss(net, X_val, y_val, w_val, 256)
            result.history.append((running / len(order), val_loss))
            if log is not None:
                log(f"epoch {epoch + 1}/{hyper.epochs} train={running / len(order):.4f} val={val_loss:.4f}")
            if val_loss < result.best_val_loss:
                result.best_val_loss, result.best_epoch = val_loss, epoch
                best_state = copy.deepcopy(net.state_dict())
        net.load_state_dict(best_state)
    net.eval()
    return result


@torch.no_grad()
def predict_scores(model, X, batch_size: int = 512) -> np.ndarray:
    """Probabilities for complex frames ``X`` of shape ``(n, 256)``; float64, shape ``(n, width)``."""
    net = model.net if isinstance(model, TrainedModel) else model
    net.eval()
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != FRAME_LENGTH:
        raise ValueError(f"expected frames of shape (n, {FRAME_LENGTH}), got {X.shape}")
    out = []
    for i in range(0, len(X), batch_size):
        logits = net(to_channels(X[i:i + batch_size])).double()
        out.append(net.probabilities(logits).numpy())
    if not out:
        return np.zeros((0, net.head_config.output_width))
    return np.concatenate(out)


def score(model, f: IQFrame, strict: bool = False) -> ScoreVector:
    net = model.net if isinstance(model, TrainedModel) else model
    if strict:
        power = float(np.mean(np.abs(f.samples) ** 2))
        if abs(power - 1.0) > UNIT_POWER_TOL:
            raise ValueError(f"frame is not normalized (mean power {power:.4f})")
    return ScoreVector(predict_scores(net, f.samples[None, :])[0], net.arch)


def save_checkpoint(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "state_dict": model.net.state_dict(),
        "extractor_config": asdict(model.extractor_config),
        "head_config": asdict(model.head_config),
        "best_val_loss": model.best_val_loss,
        "initial_val_loss": model.initial_val_loss,
        "best_epoch": model.best_epoch,
        "history": [list(h) for h in model.history],
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path) -> TrainedModel:
    payload = torch.load(Path(path), weights_only=True)
    ec = ExtractorConfig(**payload["extractor_config"])
    hc = HeadConfig(**payload["head_config"])
    net = OpenSetNet(ec, hc)
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return TrainedModel(net, payload["best_val_loss"], [tuple(h) for h in payload["history"]],
                        payload["initial_val_loss"], payload["best_epoch"])
