"""Training loop, top-k evaluation and metrics logging."""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .. import autograd as ag
from .. import checkpoint as ckpt
from ..graph import build_layout
from ..model import STGCN, ModelConfig, predict_topk
from ..optim import AdamState, StepDecay, adam_step
from ..pipeline.bundle import DatasetBundle

log = logging.getLogger(__name__)

DTYPES = {"float32": np.float32, "float64": np.float64}


class TrainingError(RuntimeError):
    """Training aborted on a non-finite loss or gradient."""


class CompatibilityError(ValueError):
    """Data, model and checkpoint disagree on shape or class count."""


@dataclass
class ExperimentConfig:
    model: ModelConfig
    train_data: str | None = None
    eval_data: str | None = None
    batch_size: int = 8
    optimizer: str = "adam"
    lr: float = 0.01
    decay_factor: float = 0.1
    milestones: list[int] = field(default_factory=list)
    epochs: int = 200
    seed: int = 0
    output_dir: str = "runs/experiment"
    eval_every: int = 1
    checkpoint_every: int = 0
    dtype: str = "float32"
    stop_top1: float | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}; only 'adam' is implemented")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}")

    @property
    def schedule(self) -> StepDecay:
        return StepDecay(self.lr, self.decay_factor, self.milestones)

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["model"] = self.model.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base: Path | None = None) -> "ExperimentConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment config fields: {sorted(unknown)}")
        model = doc.pop("model")
        if isinstance(model, str):
            path = Path(model) if base is None else base / model
            model = ModelConfig.load(path)
        elif isinstance(model, Mapping):
            model = ModelConfig.from_dict(model)
        if base is not None:
            for key in ("train_data", "eval_data", "output_dir"):
                if doc.get(key) is not None:
                    doc[key] = os.path.normpath(base / doc[key])
        return cls(model=model, **doc)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base=path.parent)


@dataclass
class MetricsRecord:
    epoch: int
    train_loss: float
    top1: float | None
    top5: float | None
    lr: float
    wall_time: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class TrainResult:
    model: STGCN
    records: list[MetricsRecord]
    best_top1: float | None
    best_epoch: int | None
    output_dir: Path | None


def topk_accuracy(logits: np.ndarray, labels: Sequence[int], ks: Iterable[int] = (1, 5)) -> dict[int, float]:
    """Fraction of rows whose label is among the top ``min(k, C)`` logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot score an empty set")
    out = {}
    for k in ks:
        top = predict_topk(logits, min(int(k), logits.shape[1]))
        out[int(k)] = float((top == labels[:, None]).any(axis=1).mean())
    return out


def check_compatible(model: STGCN, bundle: DatasetBundle) -> None:
    shape = bundle.shape()
    if shape is None:
        raise CompatibilityError("bundle samples do not share a fixed (T, V, C) shape")
    t, v, c = shape
    cfg = model.config
    if v != model.num_nodes or c != cfg.in_channels:
        raise CompatibilityError(
            f"bundle has V={v}, C={c}; model expects V={model.num_nodes}, C={cfg.in_channels}"
        )
    if bundle.num_classes != cfg.num_classes:
        raise CompatibilityError(f"bundle has {bundle.num_classes} classes, model {cfg.num_classes}")
    if t < cfg.temporal_kernel:
        raise CompatibilityError(f"bundle has T={t}, shorter than the temporal kernel {cfg.temporal_kernel}")


def predict_logits(model: STGCN, data: np.ndarray, adj: np.ndarray | None = None, batch_size: int = 32) -> np.ndarray:
    chunks = []
    for start in range(0, len(data), batch_size):
        part = None if adj is None else adj[start:start + batch_size]
        chunks.append(model.forward(data[start:start + batch_size], part).data)
    return np.concatenate(chunks)


def evaluate(model: STGCN, bundle: DatasetBundle, ks: Iterable[int] = (1, 5), batch_size: int = 32) -> dict[int, float]:
    """Top-k accuracy of ``model`` on ``bundle``."""
    check_compatible(model, bundle)
    data, labels = bundle.arrays()
    return topk_accuracy(predict_logits(model, data, batch_size=batch_size), labels, ks)


def load_model(checkpoint: str | Path, config: ModelConfig | str | Path | None = None, dtype=np.float64) -> STGCN:
    """Model from a checkpoint; the config defaults to ``model.json`` beside it."""
    checkpoint = Path(checkpoint)
    if config is None:
        config = checkpoint.parent / "model.json"
    if not isinstance(config, ModelConfig):
        config = ModelConfig.load(config)
    model = STGCN(config, dtype=dtype)
    try:
        model.load_state_dict(ckpt.load(checkpoint))
    except ag.ShapeError as exc:
        raise CompatibilityError(str(exc)) from None
    return model


def window_mean(records: Iterable[Mapping[str, Any]], start: int, end: int) -> dict[str, float]:
    """Mean top-1/top-5 over evaluated epochs ``start..end`` inclusive."""
    rows = [r for r in records if start <= r["epoch"] <= end and r.get("top1") is not None]
    if not rows:
        raise ValueError(f"no evaluated epochs in window {start}:{end}")
    return {
        "epochs": len(rows),
        "top1": float(np.mean([r["top1"] for r in rows])),
        "top5": float(np.mean([r["top5"] for r in rows])),
    }


def read_metrics(path: str | Path) -> list[dict[str, Any]]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def train(
    config: ExperimentConfig,
    train_bundle: DatasetBundle,
    eval_bundle: DatasetBundle | None = None,
    output_dir: str | Path | None = None,
) -> TrainResult:
    """Train an ST-GCN with Adam and step decay; deterministic given ``config.seed``.

    When ``output_dir`` is given it receives ``model.json``, ``run.json``,
    ``metrics.jsonl``, ``best.stgw`` (highest eval top-1), ``final.stgw`` and,
    if ``checkpoint_every`` is set, ``epoch_NNNN.stgw`` snapshots.
    """
    dtype = DTYPES[config.dtype]
    layout = build_layout(train_bundle.layout) if train_bundle.layout is not None else None
    if layout is not None:
        expected = build_layout(config.model.layout)
        if (expected.num_nodes, set(expected.edges), expected.center_node) != (
            layout.num_nodes, set(layout.edges), layout.center_node
        ):
            raise CompatibilityError(
                f"bundle layout {layout.name!r} differs from model layout {expected.name!r}"
            )
    model = STGCN(config.model, seed=config.seed, dtype=dtype)
    check_compatible(model, train_bundle)
    eval_bundle = eval_bundle if eval_bundle is not None and len(eval_bundle) else None
    if eval_bundle is not None:
        check_compatible(model, eval_bundle)

    data, labels = train_bundle.arrays()
    data = data.astype(dtype)
    model.fit_input_stats(data)
    adj = model.adjacency(data)
    if eval_bundle is not None:
        eval_data, eval_labels = eval_bundle.arrays()
        eval_data = eval_data.astype(dtype)
        eval_adj = model.adjacency(eval_data)

    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "model.json").write_text(config.model.dumps())
        run_doc = config.to_dict()
        run_doc["lr_schedule"] = {str(e): config.schedule.lr_at(e) for e in _schedule_epochs(config)}
        (out / "run.json").write_text(json.dumps(run_doc, indent=2, sort_keys=True) + "\n")
        metrics_file = (out / "metrics.jsonl").open("w")
    else:
        metrics_file = None

    order_rng = np.random.default_rng(config.seed + 1)
    dropout_rng = np.random.default_rng(config.seed + 2)
    state = AdamState(lr=config.lr)
    schedule = config.schedule
    records: list[MetricsRecord] = []
    best_top1, best_epoch = None, None
    n = len(labels)
    started = time.perf_counter()
    try:
        for epoch in range(1, config.epochs + 1):
            state.lr = schedule.lr_at(epoch)
            order = order_rng.permutation(n)
            total = 0.0
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                # non-finite values raise NonFiniteError; numpy's own warnings are redundant
                with np.errstate(over="ignore", invalid="ignore"):
                    try:
                        logits = model.forward(data[idx], adj[idx], training=True, rng=dropout_rng)
                        loss = ag.cross_entropy(logits, labels[idx])
                        ag.backward(loss)
                    except ag.NonFiniteError as exc:
                        raise TrainingError(f"epoch {epoch}: {exc}") from None
                adam_step(model.params, {k: p.grad for k, p in model.params.items()}, state)
                model.zero_grad()
                total += loss.item() * len(idx)
            train_loss = total / n
            top1 = top5 = None
            if eval_bundle is not None and (epoch % config.eval_every == 0 or epoch == config.epochs):
                acc = topk_accuracy(predict_logits(model, eval_data, eval_adj), eval_labels, (1, 5))
                top1, top5 = acc[1], acc[5]
            record = MetricsRecord(epoch, train_loss, top1, top5, state.lr, round(time.perf_counter() - started, 3))
            records.append(record)
            log.info(
                "epoch %d loss %.4f top1 %s top5 %s lr %g",
                epoch, train_loss, _fmt(top1), _fmt(top5), state.lr,
            )
            if metrics_file is not None:
                metrics_file.write(record.to_json() + "\n")
                metrics_file.flush()
            if top1 is not None and (best_top1 is None or top1 > best_top1):
                best_top1, best_epoch = top1, epoch
                if out is not None:
                    ckpt.save(out / "best.stgw", model.state_dict())
            if out is not None and config.checkpoint_every and epoch % config.checkpoint_every == 0:
                ckpt.save(out / f"epoch_{epoch:04d}.stgw", model.state_dict())
            if config.stop_top1 is not None and top1 is not None and top1 >= config.stop_top1:
                log.info("stopping: top-1 %.4f reached the target %.4f", top1, config.stop_top1)
                break
    finally:
        if metrics_file is not None:
            metrics_file.close()
    if out is not None:
        ckpt.save(out / "final.stgw", model.state_dict())
    return TrainResult(model, records, best_top1, best_epoch, out)


def _schedule_epochs(config: ExperimentConfig) -> list[int]:
    """Epochs at which the learning rate changes, plus the first."""
    return sorted({1} | {m + 1 for m in config.milestones if m < config.epochs})


def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{x:.4f}"
