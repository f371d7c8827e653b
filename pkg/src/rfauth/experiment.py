"""Randomized-realization experiments: single runs, |A| sweeps and |K| sweeps."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .dataset import gather, make_splits, partition_transmitters, write_split_manifest
from .decision import balanced_accuracy, decide_batch, outlier_scores, roc_curve
from .estimator import OpenSetAuthorizer
from .io import read_corpus, write_json
from .models import save_checkpoint
from .simulate import Corpus, ImpairmentRanges, generate_corpus

log = logging.getLogger(__name__)

CSV_COLUMNS = ("sweep_value", "arch", "realization", "auc", "balanced_accuracy", "closed_set_accuracy",
               "gamma_summary", "n_params")
DEFAULT_AUTH_GRID = (5, 10, 15, 20, 25, 30, 40)
DEFAULT_KNOWN_GRID = (0, 5, 10, 15, 20, 25)


class ConfigError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


class MissingDataError(FileNotFoundError):
    pass


@dataclass
class CorpusSpec:
    path: str | None = None
    n_tx: int = 71
    frames_per_tx: tuple[int, int] = (200, 1500)
    snr_db: float = 20.0
    seed: int = 0
    ranges: dict | None = None
    range_scale: float = 1.0
    layout: str = "random"

    def load(self) -> Corpus:
        if self.path is not None:
            try:
                return read_corpus(self.path)
            except FileNotFoundError as exc:
                raise MissingDataError(str(exc)) from exc
        try:
            ranges = ImpairmentRanges.from_dict(self.ranges) if self.ranges else ImpairmentRanges()
            return generate_corpus(self.n_tx, tuple(self.frames_per_tx), self.snr_db, self.seed,
                                   ranges.scaled(self.range_scale), layout=self.layout)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid corpus settings: {exc}") from exc

    @property
    def pool_size(self) -> int | None:
        return None if self.path is not None else self.n_tx


@dataclass
class TrainingSpec:
    epochs: int = 10
    learning_rate: float = 1e-3
    batch_size: int = 64
    block_filters: tuple[int, ...] = (32, 32, 64, 64)
    kernel_size: int = 3
    feature_dim: int = 1000
    batch_norm: bool = True
    hidden_width: int = 80
    l2_weight: float = 1e-3
    noise_variance: float = 0.01


@dataclass
class ExperimentConfig:
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    sizes: tuple[int, int, int] = (10, 25, 30)
    archs: tuple[str, ...] = ("disc", "dclass", "ova")
    n_realizations: int = 10
    base_seed: int = 0
    training: TrainingSpec = field(default_factory=TrainingSpec)
    output_dir: str = "results"
    authorized_grid: tuple[int, ...] = DEFAULT_AUTH_GRID
    known_grid: tuple[int, ...] = DEFAULT_KNOWN_GRID
    n_jobs: int = 1
    save_checkpoints: bool = True

    def __post_init__(self):
        if isinstance(self.corpus, dict):
            self.corpus = _build(CorpusSpec, self.corpus, "corpus")
        if isinstance(self.training, dict):
            self.training = _build(TrainingSpec, self.training, "training")
        self.sizes = tuple(int(s) for s in self.sizes)
        self.archs = tuple(self.archs)
        self.authorized_grid = tuple(int(v) for v in self.authorized_grid)
        self.known_grid = tuple(int(v) for v in self.known_grid)
        if len(self.sizes) != 3 or min(self.sizes) < 0 or self.sizes[0] < 1:
            raise ConfigError(f"sizes must be (|A| >= 1, |K| >= 0, |O| >= 0), got {self.sizes}")
        bad = set(self.archs) - {"disc", "dclass", "ova"}
        if not self.archs or bad:
            raise ConfigError(f"archs must be a nonempty subset of disc/dclass/ova, got {self.archs}")
        if not self.authorized_grid or not self.known_grid:
            raise ConfigError("sweep grids must be nonempty")
        if self.n_realizations < 1:
            raise ConfigError("n_realizations must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return _build(cls, d, "config")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_sizes(self, sizes) -> "ExperimentConfig":
        d = self.to_dict()
        d["sizes"] = tuple(sizes)
        return ExperimentConfig.from_dict(d)


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid {where}: {exc}") from exc


@dataclass
class ArchResult:
    auc: float
    balanced_accuracy: float
    closed_set_accuracy: float
    h0_fraction: float
    thresholds: dict | None
    n_params: int
    best_val_loss: float

    @property
    def gamma_summary(self) -> float:
        if not self.thresholds:
            return math.nan
        return float(np.mean(self.thresholds["gamma"]))


@dataclass
class RealizationResult:
    realization: int
    sweep_value: int | None
    partition: dict
    archs: dict[str, ArchResult]

    def rows(self):
        for arch in sorted(self.archs):
            r = self.archs[arch]
            yield {"sweep_value": self.sweep_value if self.sweep_value is not None else "",
                   "arch": arch, "realization": self.realization, "auc": r.auc,
                   "balanced_accuracy": r.balanced_accuracy, "closed_set_accuracy": r.closed_set_accuracy,
                   "gamma_summary": r.gamma_summary, "n_params": r.n_params}


def realization_seeds(base_seed: int, index: int) -> dict[str, int]:
    state = np.random.SeedSequence([base_seed, index]).generate_state(5)
    return {"partition": int(state[0]), "split": int(state[1]), "disc": int(state[2]),
            "dclass": int(state[3]), "ova": int(state[4])}


def check_feasible(sizes, pool: int) -> None:
    if sum(sizes) > pool:
        raise InfeasibleError(f"sizes {tuple(sizes)} need {sum(sizes)} transmitters, pool has {pool}")


def _evaluate(est: OpenSetAuthorizer, test_X, test_tx, is_outlier):
    Z = est.predict_proba(test_X)
    s = outlier_scores(est.arch, Z)
    flags = decide_batch(est.arch, Z, est.threshold_)
    auc = roc_curve(s, is_outlier).auc
    acc = balanced_accuracy(flags, is_outlier)
    if est.arch == "disc":
        closed = math.nan
    else:
        auth = ~is_outlier
        closed = float(np.mean(est.classes_[est.classify(Z[auth])] == test_tx[auth]))
    return Z, s, flags, ArchResult(auc, acc, closed, float(np.mean(~flags)),
                                   est.threshold_.to_dict() if est.threshold_ is not None else None,
                                   est.n_params_, est.model_.best_val_loss)


def run_realization(cfg: ExperimentConfig, realization_index: int, corpus: Corpus | None = None,
                    out_dir=None, sweep_value: int | None = None) -> RealizationResult:
    """Partition, split, train each arch, fit thresholds and score the test set.

    With ``out_dir``, each arch's artifacts land in ``out_dir/<arch>/`` and an
    arch whose ``metrics.json`` already exists is loaded instead of retrained.
    """
    corpus = corpus if corpus is not None else cfg.corpus.load()
    check_feasible(cfg.sizes, len(corpus.tx_ids))
    seeds = realization_seeds(cfg.base_seed, realization_index)
    part = partition_transmitters(corpus.tx_ids, cfg.sizes, seeds["partition"])
    bundle = make_splits(corpus, part, seeds["split"])
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        write_split_manifest(bundle, out_dir / "split.json")

    X_tr, X_val = gather(corpus, bundle.train_refs), gather(corpus, bundle.val_refs)
    y_tr, y_val = bundle.train_refs[:, 0], bundle.val_refs[:, 0]
    test_tx = bundle.test_refs[:, 0]
    if not bundle.test_is_outlier.any():
        raise InfeasibleError("evaluation needs at least one unseen outlier (|O| >= 1)")

    results = {}
    t = cfg.training
    for arch in cfg.archs:
        arch_dir = out_dir / arch if out_dir is not None else None
        if arch_dir is not None and (arch_dir / "metrics.json").exists():
            results[arch] = ArchResult(**json.loads((arch_dir / "metrics.json").read_text()))
            continue
        est = OpenSetAuthorizer(arch=arch, authorized=part.authorized, block_filters=t.block_filters,
                                kernel_size=t.kernel_size, feature_dim=t.feature_dim,
                                batch_norm=t.batch_norm, hidden_width=t.hidden_width,
                                l2_weight=t.l2_weight, epochs=t.epochs, learning_rate=t.learning_rate,
                                batch_size=t.batch_size, noise_variance=t.noise_variance, random_state=seeds[arch])
        try:
            est.fit(X_tr, y_tr, X_val, y_val)
        except Exception as exc:
            raise RuntimeError(f"training {arch} failed in realization {realization_index} "
                               f"(sizes {cfg.sizes}): {exc}") from exc
        Z, s, flags, res = _evaluate(est, bundle.test_X, test_tx, bundle.test_is_outlier)
        results[arch] = res
        log.info("realization %d %s: auc=%.3f acc=%.3f", realization_index, arch, res.auc, res.balanced_accuracy)
        if arch_dir is not None:
            arch_dir.mkdir(parents=True, exist_ok=True)
            if cfg.save_checkpoints:
                save_checkpoint(est.model_, arch_dir / "checkpoint.pt")
            if res.thresholds is not None:
                write_json(arch_dir / "thresholds.json", res.thresholds)
            np.savez(arch_dir / "scores.npz", probabilities=Z, outlier_score=s, decided_outlier=flags,
                     is_outlier=bundle.test_is_outlier, tx_id=test_tx)
            # written last: its presence marks the arch as finished
            write_json(arch_dir / "metrics.json", asdict(res))
    return RealizationResult(realization_index, sweep_value, part.to_dict(), results)


def _run_sweep(cfg: ExperimentConfig, kind: str, values, archs, size_of) -> list[RealizationResult]:
    corpus = cfg.corpus.load()
    points = [(v, size_of(v)) for v in values]
    for _, sizes in points:
        check_feasible(sizes, len(corpus.tx_ids))
    out = Path(cfg.output_dir)
    point_cfg = {v: ExperimentConfig.from_dict({**cfg.to_dict(), "sizes": sizes, "archs": archs})
                 for v, sizes in points}
    jobs = [(v, r) for v, _ in points for r in range(cfg.n_realizations)]

    def job(v, r):
        return run_realization(point_cfg[v], r, corpus, out / f"{kind}_{v}" / f"r{r:03d}", sweep_value=v)

    if cfg.n_jobs == 1:
        results = [job(v, r) for v, r in jobs]
    else:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=cfg.n_jobs)(delayed(job)(v, r) for v, r in jobs)
    write_results(results, out)
    return results


def sweep_authorized(cfg: ExperimentConfig, values=None) -> list[RealizationResult]:
    """Vary |A| at the configured |K| and |O|; dclass is not run."""
    values = tuple(values) if values is not None else cfg.authorized_grid
    archs = tuple(a for a in cfg.archs if a != "dclass") or ("ova",)
    _, k, o = cfg.sizes
    return _run_sweep(cfg, "authorized", values, archs, lambda a: (a, k, o))


def sweep_known(cfg: ExperimentConfig, values=None) -> list[RealizationResult]:
    """Vary |K| at the configured |A| and |O| for every configured arch."""
    values = tuple(values) if values is not None else cfg.known_grid
    a, _, o = cfg.sizes
    return _run_sweep(cfg, "known", values, cfg.archs, lambda k: (a, k, o))


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    rows = sorted((row for res in results for row in res.rows()),
                  key=lambda r: (r["sweep_value"] if r["sweep_value"] != "" else -1, r["arch"], r["realization"]))
    for row in rows:
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def summarize(rows) -> list[dict]:
    """Mean and (population) standard deviation per (sweep_value, arch)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        value = row["sweep_value"]
        value = int(value) if value not in ("", None) else None
        groups.setdefault((value, row["arch"]), []).append(row)
    out = []
    for (value, arch), members in sorted(groups.items(), key=lambda kv: (_sort_key(kv[0][0]), kv[0][1])):
        entry = {"sweep_value": value, "arch": arch, "n": len(members)}
        for metric in ("auc", "balanced_accuracy", "closed_set_accuracy"):
            vals = np.array([float(m[metric]) for m in members])
            vals = vals[~np.isnan(vals)]
            entry[f"{metric}_mean"] = float(vals.mean()) if vals.size else None
            entry[f"{metric}_std"] = float(vals.std()) if vals.size else None
            entry[f"{metric}_min"] = float(vals.min()) if vals.size else None
            entry[f"{metric}_max"] = float(vals.max()) if vals.size else None
        out.append(entry)
    return out


def _sort_key(v):
    return -1.0 if v is None else float(v)


DCLASS_AUC_NOTE = ("dclass has no adjustable threshold; its AUC scans the outlier-class probability "
                   "and goes beyond the three-architecture protocol")


def write_results(results, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = results_csv(results)
    tmp = out_dir / "realizations.csv.tmp"
    tmp.write_text(text)
    tmp.replace(out_dir / "realizations.csv")
    rows = list(csv.DictReader(io.StringIO(text)))
    write_json(out_dir / "summary.json", {"groups": summarize(rows), "notes": [DCLASS_AUC_NOTE]})
    return out_dir / "realizations.csv"


def read_rows(results_dir) -> list[dict]:
    path = Path(results_dir) / "realizations.csv"
    if not path.exists():
        raise MissingDataError(f"no realizations.csv in {results_dir}")
    with path.open() as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise MissingDataError(f"{path} has unexpected columns {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise MissingDataError(f"{path} has no result rows")
    for row in rows:
        try:
            for c in ("auc", "balanced_accuracy", "closed_set_accuracy"):
                float(row[c])
        except ValueError as exc:
            raise MissingDataError(f"{path}: corrupt row {row}") from exc
    return rows


def report(results_dir) -> list[Path]:
    """Rebuild ``summary.json`` from ``realizations.csv`` and draw mean +/- std plots."""
    results_dir = Path(results_dir)
    rows = read_rows(results_dir)
    summary = summarize(rows)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for metric, fname, label in (("auc", "fig_auc.png", "AUC"), ("balanced_accuracy", "fig_acc.png", "Accuracy")):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for arch in sorted({e["arch"] for e in summary}):
            pts = [e for e in summary if e["arch"] == arch and e[f"{metric}_mean"] is not None]
            x = [_sort_key(e["sweep_value"]) for e in pts]
            ax.errorbar(x, [e[f"{metric}_mean"] for e in pts], yerr=[e[f"{metric}_std"] for e in pts],
                        marker="o", capsize=3, label=arch)
        ax.set_xlabel("set size")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(results_dir / fname, dpi=120)
        plt.close(fig)
        written.append(results_dir / fname)
    write_json(results_dir / "summary.json", {"groups": summary, "notes": [DCLASS_AUC_NOTE]})
    written.append(results_dir / "summary.json")
    return written
