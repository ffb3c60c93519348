"""Training loop behind ``platerec train``."""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ctc
from .data import (
    SYMBOLS,
    alphabet_for,
    decode_label,
    encode_label,
    load_labeled_dir,
    load_manifest,
    split,
    synth_dataset,
)
from .errors import DatasetEmpty
from .layers import AdamState, log_softmax
from .model import CrnnConfig, build_crnn, checkpoint_bytes, train_step
from .pipeline import accuracy_figures, predict_plates

log = logging.getLogger(__name__)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_seq_acc: float
    val_char_acc: float
    seconds: float

    def line(self):
        return (
            f"epoch={self.epoch} train_loss={self.train_loss:.6f} val_loss={self.val_loss:.6f} "
            f"val_seq_acc={self.val_seq_acc:.4f} val_char_acc={self.val_char_acc:.4f} seconds={self.seconds:.1f}"
        )


@dataclass
class TrainResult:
    model: object
    best_model_bytes: bytes
    history: list = field(default_factory=list)
    best_epoch: int = 0
    splits: tuple = ()


def relabel(samples, source_alphabet, target_alphabet):
    for s in samples:
        s.label = encode_label(decode_label(s.label, source_alphabet), target_alphabet, s.source)
    return samples


def load_training_data(cfg):
    """Samples labelled in the model alphabet, per the config's data source."""
    alphabet = alphabet_for(cfg.alphabet)
    if cfg.data:
        path = Path(cfg.data)
        samples = load_manifest(path, alphabet) if path.is_file() else load_labeled_dir(path, alphabet)
    else:
        synth_alpha = alphabet_for(cfg.synth_alphabet)
        lengths = {n: 1.0 for n in range(cfg.minlen, cfg.maxlen + 1)}
        samples = synth_dataset(cfg.synth_n, synth_alpha, lengths, seed=cfg.synth_seed)
        relabel(samples, synth_alpha, alphabet)
    if not samples:
        raise DatasetEmpty(f"no samples found for {cfg.data or 'the synthetic settings'}")
    return samples


def batch_loss(model, images, labels, batch_size=64):
    """Mean CTC loss in inference mode."""
    total = 0.0
    for i in range(0, len(images), batch_size):
        logp = log_softmax(model.logits(np.stack(images[i : i + batch_size])))
        for lp, label in zip(logp, labels[i : i + batch_size]):
            total -= ctc.ctc_log_likelihood(lp, label)[0]
    return total / len(images)


def run_training(cfg, log_path=None, samples=None):
    alphabet = alphabet_for(cfg.alphabet)
    samples = samples if samples is not None else load_training_data(cfg)
    train, val, _ = parts = split(samples, seed=cfg.split_seed)
    if not train:
        raise DatasetEmpty("training split is empty")
    model = build_crnn(CrnnConfig(num_classes=len(alphabet) + 1), seed=cfg.seed, alphabet=alphabet)
    adam = AdamState.for_params(
        model.parameters(), learning_rate=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon
    )
    rng = np.random.default_rng(cfg.seed + 1)

    best_bytes = checkpoint_bytes(model)
    best_key = None
    result = TrainResult(model, best_bytes, splits=parts)
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        header = (
            f"# train n_train={len(train)} n_val={len(val)} epochs={cfg.epochs} "
            f"batch_size={cfg.batch_size} lr={cfg.lr} seed={cfg.seed}"
        )
        if log_fh:
            log_fh.write(header + "\n")
        X = np.stack([s.image for s in train])
        Y = [s.label for s in train]
        val_images = [s.image for s in val]
        val_truth = [decode_label(s.label, alphabet) for s in val]
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(train))
            losses = []
            for i in range(0, len(order), cfg.batch_size):
                idx = order[i : i + cfg.batch_size]
                losses.append(train_step(model, X[idx], [Y[j] for j in idx], adam, rng) * len(idx))
            train_loss = sum(losses) / len(train)
            if val:
                val_loss = batch_loss(model, val_images, [s.label for s in val])
                seq, chars = accuracy_figures(predict_plates(model, val_images), val_truth)
            else:
                val_loss, seq, chars = train_loss, 0.0, 0.0
            stats = EpochStats(epoch, train_loss, val_loss, seq, chars, time.perf_counter() - t0)
            result.history.append(stats)
            log.info(stats.line())
            if log_fh:
                log_fh.write(stats.line() + "\n")
                log_fh.flush()
            key = (seq, -val_loss)
            if best_key is None or key > best_key:
                best_key = key
                result.best_model_bytes = checkpoint_bytes(model)
                result.best_epoch = epoch
            if cfg.stop_at_val_accuracy and seq >= cfg.stop_at_val_accuracy:
                log.info("validation accuracy %.4f reached the stop threshold", seq)
                break
    finally:
        if log_fh:
            log_fh.close()
    return result


def train_from_config(cfg):
    """Run training and write the best-validation checkpoint to ``cfg.out``."""
    log_path = cfg.log or str(Path(cfg.out).with_suffix(".log"))
    result = run_training(cfg, log_path)
    Path(cfg.out).write_bytes(result.best_model_bytes)
    return result
