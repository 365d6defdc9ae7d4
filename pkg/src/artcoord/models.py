"""Classifier assembly, training loop, and grid search.

The single-tower network takes one correlation matrix per sample, shaped
(channels^2, delays+1, 1).  Four parallel dilated convolutions (dilations 1,
3, 7, 15 along the delay axis, kernel (15, 1), same padding) look at the
delay structure at multiple scales; their channel-concatenated output runs
through a strided conv, a valid conv, max pooling, and a small dense head
ending in one sigmoid unit.  The fused network is two such towers (one per
feature stream) whose flattened conv features are concatenated before a
shared head.

Training uses Adam on class-weighted binary cross entropy with early
stopping on the class-weighted validation loss and best-weights restore.
z-normalization statistics are always fit on the training portion alone.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .corpus import MODE_STREAMS, SampleSet, speaker_disjoint
from .correlation import NormStats, apply_stats_array, fit_stats_array
from .dataset import ClassWeights
from .errors import FormatError, TrainingDiverged
from .metrics import auc_roc
from .nn.checkpoint import read_checkpoint, write_checkpoint
from .nn.layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    LeakyReLU,
    MaxPool,
    ParallelConcat,
    ReLU,
    Sequential,
    Sigmoid,
    conv_output_size,
)
from .nn.losses import weighted_bce, weighted_bce_grad
from .nn.network import MultiTowerNet
from .nn.optim import Adam

# fixed architecture pieces (not part of the tuned grid)
BRANCH_DILATIONS = (1, 3, 7, 15)
BRANCH_KERNEL = (15, 1)
CONV5_KERNEL = (3, 1)
CONV5_STRIDE = (2, 1)
CONV5_FILTERS = 16
POOL = (2, 1)

# input channels per feature stream: squared channel counts of the
# 8-channel articulatory and 12-channel cepstral representations
STREAM_CHANNELS = {"tv8": 64, "mfcc12": 144}


@dataclass
class ModelConfig:
    """Architecture and training hyperparameters for one run."""

    feature_mode: str = "tv8"  # tv8 | mfcc12 | fused
    max_delay: int = 50
    branch_filters: int = 32  # per parallel dilated conv
    conv6_filters: int = 16
    conv6_kernel: tuple[int, int] = (3, 1)
    dense1_units: int = 32
    dense2_units: int = 8
    dropout_p: float = 0.5
    l2: float = 0.01
    leaky_slope: float = 0.01
    learning_rate: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 300
    patience: int = 15
    seed: int = 0
    # placement switches (the canonical layout keeps all three on)
    batchnorm: bool = True
    maxpool: bool = True
    dropout_after_flatten: bool = True
    dropout_after_dense1: bool = True
    train_tag: str = ""

    def __post_init__(self):
        if self.feature_mode not in MODE_STREAMS:
            raise ValueError(f"unknown feature mode {self.feature_mode!r}")
        if self.max_delay < 1:
            raise ValueError(f"max_delay must be >= 1, got {self.max_delay}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        for name in ("branch_filters", "conv6_filters", "dense1_units", "dense2_units"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        self.conv6_kernel = tuple(self.conv6_kernel)

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        kw = dict(d)
        if "conv6_kernel" in kw:
            kw["conv6_kernel"] = tuple(kw["conv6_kernel"])
        return cls(**kw)


# grid-searched dimensions and the retained best points per feature mode
GRID_RANGES = {
    "branch_filters": (16, 32),
    "conv6_filters": (8, 16),
    "conv6_kernel": ((3, 1), (4, 1)),
    "dense2_units": (8, 16),
    "dropout_p": (0.4, 0.5),
}
BEST_PARAMS = {
    "tv8": dict(branch_filters=32, conv6_filters=16, conv6_kernel=(3, 1), dense2_units=8, dropout_p=0.5),
    "mfcc12": dict(branch_filters=16, conv6_filters=8, conv6_kernel=(3, 1), dense2_units=16, dropout_p=0.5),
    "fused": dict(branch_filters=32, conv6_filters=8, conv6_kernel=(3, 1), dense2_units=8, dropout_p=0.5),
}


def best_config(feature_mode: str, **overrides) -> ModelConfig:
    """The retained grid point for a feature mode, with optional overrides."""
    params = dict(BEST_PARAMS[feature_mode])
    params.update(overrides)
    return ModelConfig(feature_mode=feature_mode, **params)


def grid_configs(feature_mode: str, base: ModelConfig | None = None) -> list[ModelConfig]:
    """All 32 grid points (2^5 combinations of the searched dimensions)."""
    base = base if base is not None else ModelConfig(feature_mode=feature_mode)
    names = list(GRID_RANGES)
    out = []
    for values in itertools.product(*(GRID_RANGES[n] for n in names)):
        out.append(replace(base, feature_mode=feature_mode, **dict(zip(names, values))))
    return out


def tower_heights(config: ModelConfig) -> dict[str, int]:
    """Feature-map heights through one tower (width is always 1)."""
    h = config.max_delay + 1
    h_concat = h  # branch convs: stride 1, same padding
    h5 = conv_output_size(h_concat, CONV5_KERNEL[0], 1, CONV5_STRIDE[0], "same")
    h6 = conv_output_size(h5, config.conv6_kernel[0], 1, 1, "valid")
    h_pool = h6 // POOL[0] if config.maxpool else h6
    return {"input": h, "concat": h_concat, "conv5": h5, "conv6": h6, "pool": h_pool}


def tower_output_width(config: ModelConfig) -> int:
    return tower_heights(config)["pool"] * config.conv6_filters


def _check_structural(config: ModelConfig) -> None:
    if tower_output_width(config) < 1:  # conv_output_size raises earlier if conv6 cannot fit
        raise ValueError(
            f"config collapses the tower to zero width (heights {tower_heights(config)})"
        )


def _tower(config: ModelConfig, in_channels: int, rng, dtype, name: str) -> Sequential:
    def conv_block(tag, cin, cout, kernel, dilation=(1, 1), stride=(1, 1), padding="same"):
        block = [
            Conv2D(cin, cout, kernel, dilation=dilation, stride=stride, padding=padding,
                   rng=rng, dtype=dtype, name="conv"),
        ]
        if config.batchnorm:
            block.append(BatchNorm(cout, dtype=dtype, name="bn"))
        block.append(LeakyReLU(config.leaky_slope, name="act"))
        return Sequential(block, name=tag)

    branches = [
        conv_block(f"c{i}", in_channels, config.branch_filters, BRANCH_KERNEL, dilation=(d, 1))
        for i, d in enumerate(BRANCH_DILATIONS, start=1)
    ]
    layers: list = [ParallelConcat(branches, name="branches")]
    layers.append(
        conv_block("c5", len(BRANCH_DILATIONS) * config.branch_filters, CONV5_FILTERS,
                   CONV5_KERNEL, stride=CONV5_STRIDE)
    )
    layers.append(
        conv_block("c6", CONV5_FILTERS, config.conv6_filters, config.conv6_kernel, padding="valid")
    )
    if config.maxpool:
        layers.append(MaxPool(POOL, name="pool"))
    layers.append(Flatten(name="flatten"))
    return Sequential(layers, name=name)


def _head(config: ModelConfig, in_width: int, rng, dtype) -> Sequential:
    layers: list = []
    if config.dropout_after_flatten:
        layers.append(Dropout(config.dropout_p, name="drop1"))
    layers += [
        Dense(in_width, config.dense1_units, l2=config.l2, rng=rng, dtype=dtype, name="d1"),
        ReLU(name="act1"),
    ]
    if config.dropout_after_dense1:
        layers.append(Dropout(config.dropout_p, name="drop2"))
    layers += [
        Dense(config.dense1_units, config.dense2_units, l2=config.l2, rng=rng, dtype=dtype, name="d2"),
        ReLU(name="act2"),
        Dense(config.dense2_units, 1, rng=rng, dtype=dtype, name="out"),
        Sigmoid(name="sigmoid"),
    ]
    return Sequential(layers, name="head")


def build_network(config: ModelConfig, input_channels: list[int], dtype=np.float32) -> MultiTowerNet:
    """Assemble a network with arbitrary per-tower input channel counts.

    Initialization is driven entirely by ``config.seed``, so identical
    configs build identical networks.
    """
    _check_structural(config)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(0,)))
    towers = [
        _tower(config, c, rng, dtype, name=f"t{i}") for i, c in enumerate(input_channels)
    ]
    width = len(input_channels) * tower_output_width(config)
    return MultiTowerNet(towers, _head(config, width, rng, dtype))


def build_single_tower(config: ModelConfig, dtype=np.float32) -> MultiTowerNet:
    if config.feature_mode not in ("tv8", "mfcc12"):
        raise ValueError(f"single-tower model needs feature_mode tv8 or mfcc12, got {config.feature_mode!r}")
    return build_network(config, [STREAM_CHANNELS[config.feature_mode]], dtype=dtype)


def build_fused(
    config: ModelConfig,
    mfcc_config: ModelConfig | None = None,
    dtype=np.float32,
) -> MultiTowerNet:
    """Two-tower late-fusion model: articulatory stream first, cepstral second.

    By default one config governs both towers and the head; pass
    ``mfcc_config`` to shape the second tower differently.
    """
    if mfcc_config is None or mfcc_config == config:
        cfg = replace(config, feature_mode="fused")
        return build_network(cfg, [STREAM_CHANNELS["tv8"], STREAM_CHANNELS["mfcc12"]], dtype=dtype)
    _check_structural(config)
    _check_structural(mfcc_config)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(0,)))
    towers = [
        _tower(config, STREAM_CHANNELS["tv8"], rng, dtype, name="t0"),
        _tower(mfcc_config, STREAM_CHANNELS["mfcc12"], rng, dtype, name="t1"),
    ]
    width = tower_output_width(config) + tower_output_width(mfcc_config)
    return MultiTowerNet(towers, _head(config, width, rng, dtype))


def build_model(config: ModelConfig, dtype=np.float32) -> MultiTowerNet:
    if config.feature_mode == "fused":
        return build_fused(config, dtype=dtype)
    return build_single_tower(config, dtype=dtype)


def expected_param_count(config: ModelConfig) -> int:
    """Closed-form trainable parameter count of ``build_model(config)``."""
    heights = tower_heights(config)
    streams = MODE_STREAMS[config.feature_mode]

    def tower_count(in_channels: int) -> int:
        count = 0
        for _ in BRANCH_DILATIONS:
            count += config.branch_filters * in_channels * BRANCH_KERNEL[0] * BRANCH_KERNEL[1]
            count += config.branch_filters  # bias
            if config.batchnorm:
                count += 2 * config.branch_filters
        concat = len(BRANCH_DILATIONS) * config.branch_filters
        count += CONV5_FILTERS * concat * CONV5_KERNEL[0] * CONV5_KERNEL[1] + CONV5_FILTERS
        if config.batchnorm:
            count += 2 * CONV5_FILTERS
        count += (
            config.conv6_filters * CONV5_FILTERS * config.conv6_kernel[0] * config.conv6_kernel[1]
            + config.conv6_filters
        )
        if config.batchnorm:
            count += 2 * config.conv6_filters
        return count

    total = sum(tower_count(STREAM_CHANNELS[s]) for s in streams)
    width = len(streams) * heights["pool"] * config.conv6_filters
    total += width * config.dense1_units + config.dense1_units
    total += config.dense1_units * config.dense2_units + config.dense2_units
    total += config.dense2_units * 1 + 1
    return total


# --- training --------------------------------------------------------------


class EarlyStopping:
    """Patience automaton over validation losses.

    Any strictly lower loss counts as improvement.  ``update`` returns True
    when training should stop: after ``patience`` consecutive non-improving
    epochs, or on reaching ``max_epochs``.
    """

    def __init__(self, patience: int = 15, max_epochs: int = 300):
        self.patience = patience
        self.max_epochs = max_epochs
        self.epoch = 0
        self.wait = 0
        self.best_loss = np.inf
        self.best_epoch = 0

    def update(self, loss: float) -> bool:
        self.epoch += 1
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = self.epoch
            self.wait = 0
        else:
            self.wait += 1
        return self.wait >= self.patience or self.epoch >= self.max_epochs


@dataclass
class TrainReport:
    train_losses: list[float]
    val_losses: list[float]
    stopped_epoch: int
    best_epoch: int
    best_val_loss: float
    restored_best: bool


@dataclass
class TrainResult:
    report: TrainReport
    norm_stats: list[NormStats]
    optimizer: Adam


def _epoch_val_loss(model, inputs, labels, sample_weights, batch_size: int) -> float:
    n = len(labels)
    total = 0.0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        batch = [arr[start:stop] for arr in inputs]
        pred = model.forward(batch, train=False)
        total += weighted_bce(pred, labels[start:stop], sample_weights[start:stop]) * (stop - start)
    return total / n


def train(
    model: MultiTowerNet,
    train_set: SampleSet,
    val_set: SampleSet,
    weights: ClassWeights,
    config: ModelConfig,
    optimizer: Adam | None = None,
    norm_stats: list[NormStats] | None = None,
    start_epoch: int = 0,
    log=None,
) -> TrainResult:
    """Train with early stopping and best-weights restore.

    z-normalization statistics are fit on the training matrices only (unless
    resuming with previously fitted ones) and applied to both sets.  The
    per-sample loss weight is the class weight of the sample's label, in
    training and validation alike.  The reported training loss includes the
    L2 penalty; the validation loss (the early-stopping criterion) does not.
    """
    if not speaker_disjoint(train_set, val_set):
        raise ValueError("training and validation sets share speakers")
    if norm_stats is None:
        norm_stats = [fit_stats_array(arr) for arr in train_set.inputs]
    x_train = [apply_stats_array(arr, s) for arr, s in zip(train_set.inputs, norm_stats)]
    x_val = [apply_stats_array(arr, s) for arr, s in zip(val_set.inputs, norm_stats)]
    y_train = train_set.labels.astype(np.float64)
    y_val = val_set.labels.astype(np.float64)
    w_train = weights.as_array(train_set.labels)
    w_val = weights.as_array(val_set.labels)

    optimizer = optimizer if optimizer is not None else Adam(lr=config.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(1,)))
    stopper = EarlyStopping(patience=config.patience, max_epochs=config.max_epochs)
    params = model.named_params()

    train_losses: list[float] = []
    val_losses: list[float] = []
    best_snapshot = None
    n = len(train_set)

    for _ in range(start_epoch, config.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = [arr[idx] for arr in x_train]
            pred = model.forward(batch, train=True, rng=rng)
            data_loss = weighted_bce(pred, y_train[idx], w_train[idx])
            loss = data_loss + model.reg_loss()
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite training loss {loss} at epoch {stopper.epoch + 1}"
                )
            model.backward(weighted_bce_grad(pred, y_train[idx], w_train[idx]))
            optimizer.step(params, model.named_grads())
            epoch_loss += loss * len(idx)
        train_losses.append(epoch_loss / n)

        val_loss = _epoch_val_loss(model, x_val, y_val, w_val, config.batch_size)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {stopper.epoch + 1}")
        val_losses.append(val_loss)
        stop = stopper.update(val_loss)
        if stopper.best_epoch == stopper.epoch:
            best_snapshot = model.snapshot()
        if log is not None:
            log(start_epoch + stopper.epoch, train_losses[-1], val_loss)
        if stop:
            break

    restored = False
    if best_snapshot is not None and stopper.best_epoch != stopper.epoch:
        model.restore(best_snapshot)
        restored = True

    report = TrainReport(
        train_losses=train_losses,
        val_losses=val_losses,
        stopped_epoch=start_epoch + stopper.epoch,
        best_epoch=start_epoch + stopper.best_epoch,
        best_val_loss=float(stopper.best_loss),
        restored_best=restored,
    )
    return TrainResult(report=report, norm_stats=norm_stats, optimizer=optimizer)


# --- checkpoint glue -------------------------------------------------------


def model_to_checkpoint(
    model: MultiTowerNet,
    config: ModelConfig,
    optimizer: Adam | None = None,
    norm_stats: list[NormStats] | None = None,
    meta: dict | None = None,
) -> bytes:
    tensors = dict(model.named_params())
    tensors.update(model.named_state())
    header: dict = {"model_config": config.to_dict()}
    if optimizer is not None:
        tensors.update(optimizer.state_tensors())
        header["optimizer"] = optimizer.hyperparams()
    if norm_stats is not None:
        for i, stats in enumerate(norm_stats):
            tensors[f"norm.mean/{i}"] = stats.mean
            tensors[f"norm.std/{i}"] = stats.std
        header["n_norm_streams"] = len(norm_stats)
    if meta:
        header["meta"] = meta
    return write_checkpoint(header, tensors)


@dataclass
class LoadedModel:
    model: MultiTowerNet
    config: ModelConfig
    optimizer: Adam | None
    norm_stats: list[NormStats] | None
    meta: dict


def model_from_checkpoint(data: bytes, dtype=np.float32) -> LoadedModel:
    header, tensors = read_checkpoint(data)
    config = ModelConfig.from_dict(header["model_config"])
    model = build_model(config, dtype=dtype)
    live = {**model.named_params(), **model.named_state()}
    for name, arr in live.items():
        if name not in tensors:
            raise FormatError(f"checkpoint is missing tensor {name!r}")
        if tensors[name].shape != arr.shape:
            raise FormatError(
                f"tensor {name!r} has shape {tensors[name].shape}, model expects {arr.shape}"
            )
        arr[...] = tensors[name]

    optimizer = None
    if "optimizer" in header:
        optimizer = Adam.from_hyperparams(header["optimizer"])
        for name in model.named_params():
            m_key, v_key = f"opt.m/{name}", f"opt.v/{name}"
            if m_key in tensors:
                optimizer.m[name] = tensors[m_key].copy()
                optimizer.v[name] = tensors[v_key].copy()

    norm_stats = None
    if "n_norm_streams" in header:
        norm_stats = [
            NormStats(mean=tensors[f"norm.mean/{i}"], std=tensors[f"norm.std/{i}"])
            for i in range(header["n_norm_streams"])
        ]
    return LoadedModel(
        model=model,
        config=config,
        optimizer=optimizer,
        norm_stats=norm_stats,
        meta=header.get("meta", {}),
    )


# --- grid search ------------------------------------------------------------


@dataclass
class GridEntry:
    config: ModelConfig
    best_val_loss: float | None
    stopped_epoch: int | None
    best_epoch: int | None
    criterion_value: float | None
    error: str | None = None


@dataclass
class GridSearchResult:
    entries: list[GridEntry]
    best_index: int
    criterion: str

    @property
    def best_config(self) -> ModelConfig:
        return self.entries[self.best_index].config


def grid_search(
    train_set: SampleSet,
    val_set: SampleSet,
    weights: ClassWeights,
    feature_mode: str,
    base: ModelConfig | None = None,
    criterion: str = "val_loss",
    log=None,
) -> tuple[GridSearchResult, bytes]:
    """Train every grid point once and keep the best checkpoint.

    ``criterion`` selects the grid winner: 'val_loss' (lower is better,
    matching the early-stopping quantity), or 'val_auc' / 'val_accuracy'
    (higher is better, computed with the restored best weights).  Failed
    points are recorded and skipped.
    """
    from .metrics import score_samples

    if criterion not in ("val_loss", "val_auc", "val_accuracy"):
        raise ValueError(f"unknown grid criterion {criterion!r}")
    entries: list[GridEntry] = []
    best_index = -1
    best_key = None
    best_blob = b""
    for i, config in enumerate(grid_configs(feature_mode, base=base)):
        try:
            model = build_model(config)
            result = train(model, train_set, val_set, weights, config)
        except (TrainingDiverged, ValueError) as exc:
            entries.append(GridEntry(config, None, None, None, None, error=str(exc)))
            if log is not None:
                log(i, entries[-1])
            continue
        report = result.report
        if criterion == "val_loss":
            value = report.best_val_loss
            key = value
        else:
            scores = score_samples(model, val_set, result.norm_stats)
            if criterion == "val_auc":
                value = auc_roc(val_set.labels, scores)
            else:
                value = float(np.mean((scores >= 0.5) == (val_set.labels == 1)))
            key = -value
        entries.append(
            GridEntry(config, report.best_val_loss, report.stopped_epoch, report.best_epoch, value)
        )
        if best_key is None or key < best_key:
            best_key = key
            best_index = i
            best_blob = model_to_checkpoint(
                model, config, optimizer=result.optimizer, norm_stats=result.norm_stats,
                meta={"best_epoch": report.best_epoch, "best_val_loss": report.best_val_loss},
            )
        if log is not None:
            log(i, entries[-1])
    if best_index < 0:
        raise TrainingDiverged("every grid point failed")
    return GridSearchResult(entries=entries, best_index=best_index, criterion=criterion), best_blob
