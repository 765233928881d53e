"""Feature extraction, the MB training loop, and batched inference."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import cwt, preprocess
from .autodiff.optim import Adam
from .autodiff.tensor import backward, no_grad
from .ingest import EcgRecord
from .models import Cnn1d, ResNet18, init_parameters, mb_loss, mb_predict
from .sampler import branch_batches, partition

log = logging.getLogger(__name__)

MODEL_KINDS = ("cwt_mb_resnet", "cwt_resnet", "cnn1d_mb", "cnn1d")


@dataclass
class FeatureConfig:
    """Everything needed to turn a raw record into a network input."""

    input: str = "scalogram"  # or "series"
    denoise: bool = True
    high_pass_hz: float = preprocess.HIGH_PASS_HZ
    notch_hz: float = preprocess.NOTCH_HZ
    low_pass_hz: float = preprocess.LOW_PASS_HZ
    filter_order: int = preprocess.FILTER_ORDER
    notch_q: float = preprocess.NOTCH_Q
    target_length: int = preprocess.TARGET_LENGTH
    target_fs: float = preprocess.TARGET_FS
    n_scales: int = cwt.N_SCALES
    f_min: float = cwt.FREQ_RANGE[0]
    f_max: float = cwt.FREQ_RANGE[1]
    fc: float = cwt.MEXICAN_HAT_FC
    image_height: int = cwt.IMAGE_SIZE
    image_width: int = cwt.IMAGE_SIZE
    mode: str = "absolute"
    boundary: str = "zero"

    def filter_chain(self):
        return preprocess.default_chain(self.notch_hz, self.high_pass_hz, self.low_pass_hz,
                                        self.filter_order, self.notch_q)

    def wavelet(self):
        return cwt.WaveletConfig.log_spaced(self.target_fs, self.n_scales, self.f_min, self.f_max, self.fc)

    @property
    def input_shape(self):
        if self.input == "scalogram":
            return (1, self.image_height, self.image_width)
        return (1, self.target_length)


def standardized(record: EcgRecord, cfg: FeatureConfig) -> preprocess.StandardizedSignal:
    if cfg.denoise:
        if record.fs < cfg.target_fs:
            # low-rate sources (digitized charts) cannot host the 40 Hz / mains
            # cutoffs; lift them to the working rate first
            record = record.with_samples(preprocess.resample_linear(record.samples, record.fs, cfg.target_fs),
                                         cfg.target_fs)
        record = preprocess.denoise_chain(record, cfg.filter_chain())
    return preprocess.standardize(record, cfg.target_length, cfg.target_fs)


def extract_features(record: EcgRecord, cfg: FeatureConfig) -> np.ndarray:
    """Network input for one record: ``(1, H, W)`` scalogram or ``(1, L)`` series."""
    sig = standardized(record, cfg)
    if cfg.input == "series":
        return sig.samples[None, :]
    img = cwt.signal_to_image(sig.samples, cfg.wavelet(), cfg.image_height, cfg.image_width, cfg.mode,
                               cfg.boundary)
    return img[None, :, :]


def extract_many(records, cfg: FeatureConfig, threads: int = 1) -> dict:
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            feats = list(pool.map(lambda r: extract_features(r, cfg), records))
    else:
        feats = [extract_features(r, cfg) for r in records]
    return {r.id: f for r, f in zip(records, feats)}


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    precision: str = "float64"
    repartition_each_epoch: bool = False


@dataclass
class TrainHistory:
    epoch_loss: list = field(default_factory=list)
    batches: int = 0


def make_model(kind: str, feature_cfg: FeatureConfig, n_branches: int, widths=None,
               cnn_channels=None, cnn_kernels=None):
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if kind.startswith("cwt"):
        return ResNet18(1, tuple(widths or (64, 128, 256, 512)), n_branches,
                        (feature_cfg.image_height, feature_cfg.image_width))
    return Cnn1d(1, tuple(cnn_channels or (16, 32, 64)), tuple(cnn_kernels or (7, 5, 3)), 2,
                 n_branches, feature_cfg.target_length)


def _dtype(precision: str):
    return {"float64": np.float64, "float32": np.float32}[precision]


def fit(model, features: dict, labels: dict, train_ids, cfg: TrainConfig, on_epoch=None):
    """Train ``model`` in place with Adam and the branch-indicator BCE.

    Batches come from one branch dataset at a time; a batch drawn from
    ``D_i`` only contributes to head ``i``.  Returns ``(history, mbset,
    optimizer)``.
    """
    dtype = _dtype(cfg.precision)
    train_ids = list(train_ids)
    y = np.array([labels[i] for i in train_ids])
    n_b = model.n_branches
    mbset = partition(train_ids, y, n_b, cfg.seed)
    init_parameters(model, cfg.seed)
    model.astype(dtype).train()
    opt = Adam(model.parameters(), lr=cfg.lr)
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        if cfg.repartition_each_epoch and epoch:
            mbset = partition(train_ids, y, n_b, cfg.seed + epoch)
        total, count = 0.0, 0
        for ids, b in branch_batches(mbset, cfg.batch_size, epoch_seed=cfg.seed * 100003 + epoch):
            x = np.stack([features[i] for i in ids]).astype(dtype, copy=False)
            target = np.array([labels[i] for i in ids], dtype=dtype)
            mask = np.zeros((len(ids), n_b), dtype=bool)
            mask[:, b] = True
            opt.zero_grad()
            loss = mb_loss(model(x), target, mask, reduction="mean")
            backward(loss)
            opt.step()
            total += float(loss.data) * len(ids)
            count += len(ids)
            history.batches += 1
        history.epoch_loss.append(total / count)
        log.info("epoch %d/%d loss %.5f", epoch + 1, cfg.epochs, history.epoch_loss[-1])
        if on_epoch is not None:
            on_epoch(epoch, history.epoch_loss[-1])
    model.eval()
    return history, mbset, opt


def predict_branches(model, features: dict, ids, batch_size: int = 64) -> np.ndarray:
    """Eval-mode per-branch probabilities, ``(len(ids), N_b)``."""
    model.eval()
    dtype = next(iter(model.parameters().values())).dtype
    out = []
    with no_grad():
        for start in range(0, len(ids), batch_size):
            chunk = ids[start:start + batch_size]
            x = np.stack([features[i] for i in chunk]).astype(dtype, copy=False)
            out.append(np.asarray(model(x).data, dtype=np.float64))
    return np.concatenate(out) if out else np.zeros((0, model.n_branches))


def predict_proba(model, features: dict, ids, batch_size: int = 64) -> np.ndarray:
    return mb_predict(predict_branches(model, features, list(ids), batch_size))


def feature_config_dict(cfg: FeatureConfig) -> dict:
    return asdict(cfg)
