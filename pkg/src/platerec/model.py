"""The convolutional-recurrent recognizer, its training step and checkpoints."""

import math
import struct
import zlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import ctc
from .errors import (
    ConfigInvalid,
    CorruptCheckpoint,
    IoFailure,
    NonFiniteLoss,
    ShapeMismatch,
    VersionMismatch,
)
from .layers import BiLSTM, Conv2D, Dense, Dropout, MaxPool2, adam_step, log_softmax, softmax

MAGIC = b"CRNN"
FORMAT_VERSION = 1
CONFIG_RECORD = "__config__"
ALPHABET_RECORD = "__alphabet__"


@dataclass(frozen=True)
class CrnnConfig:
    input_width: int = 200
    input_height: int = 50
    channels: int = 1
    conv1_units: int = 32
    conv2_units: int = 64
    dense_units: int = 32
    lstm1_units: int = 128
    lstm2_units: int = 64
    num_classes: int = 38
    dropout1: float = 0.2
    dropout2: float = 0.25
    dropout3: float = 0.25
    max_label_len: int = 8

    @property
    def time_steps(self):
        return self.input_width // 2 // 2

    @property
    def feature_width(self):
        return (self.input_height // 2 // 2) * self.conv2_units

    def validate(self):
        ints = [f.name for f in fields(self) if f.type in (int, "int")]
        for name in ints:
            if getattr(self, name) <= 0:
                raise ConfigInvalid(f"{name} must be positive")
        if self.input_width < 4 or self.input_height < 4:
            raise ConfigInvalid("input must be at least 4x4 to survive two 2x2 pools")
        if self.num_classes < 2:
            raise ConfigInvalid("need at least one symbol class plus the blank")
        for rate in (self.dropout1, self.dropout2, self.dropout3):
            if not 0.0 <= rate < 1.0:
                raise ConfigInvalid(f"dropout rate {rate} outside [0, 1)")
        # worst case: every symbol separated by a blank
        if self.time_steps < 2 * self.max_label_len + 1:
            raise ConfigInvalid(
                f"{self.time_steps} time steps cannot carry labels of length {self.max_label_len}"
            )
        return self


def closed_form_param_count(cfg):
    """Per-layer parameter tally written out independently of the layer code."""
    conv1 = 3 * 3 * cfg.channels * cfg.conv1_units + cfg.conv1_units
    conv2 = 3 * 3 * cfg.conv1_units * cfg.conv2_units + cfg.conv2_units
    dense = cfg.feature_width * cfg.dense_units + cfg.dense_units

    def lstm(fin, h):
        return 4 * (fin * h + h * h + h)

    bi1 = 2 * lstm(cfg.dense_units, cfg.lstm1_units)
    bi2 = 2 * lstm(2 * cfg.lstm1_units, cfg.lstm2_units)
    out = 2 * cfg.lstm2_units * cfg.num_classes + cfg.num_classes
    return conv1 + conv2 + dense + bi1 + bi2 + out


class Crnn:
    """conv(32) -> pool -> conv(64) -> pool -> column sequence -> dense(32)
    -> dropout -> biLSTM(128) -> dropout -> biLSTM(64) -> dropout -> dense(C)
    -> softmax.

    The time axis is the pooled image width; each step's feature vector is the
    pooled column (height x channels) flattened.
    """

    def __init__(self, config, rng, alphabet=None):
        cfg = config.validate()
        self.config = cfg
        if alphabet is not None and len(alphabet) + 1 != cfg.num_classes:
            raise ConfigInvalid(f"alphabet of {len(alphabet)} symbols needs {len(alphabet) + 1} classes")
        self.alphabet = alphabet
        self.conv1 = Conv2D("conv1", cfg.channels, cfg.conv1_units, rng)
        self.pool1 = MaxPool2("pool1")
        self.conv2 = Conv2D("conv2", cfg.conv1_units, cfg.conv2_units, rng)
        self.pool2 = MaxPool2("pool2")
        self.dense1 = Dense("dense1", cfg.feature_width, cfg.dense_units, rng, activation="relu")
        self.drop1 = Dropout("dropout1", cfg.dropout1)
        self.bilstm1 = BiLSTM("bilstm1", cfg.dense_units, cfg.lstm1_units, rng)
        self.drop2 = Dropout("dropout2", cfg.dropout2)
        self.bilstm2 = BiLSTM("bilstm2", 2 * cfg.lstm1_units, cfg.lstm2_units, rng)
        self.drop3 = Dropout("dropout3", cfg.dropout3)
        # softmax is applied outside the layer so training can use fused log-softmax
        self.out = Dense("out", 2 * cfg.lstm2_units, cfg.num_classes, rng, activation="none")
        self._cnn = [self.conv1, self.pool1, self.conv2, self.pool2]
        self._rnn = [self.dense1, self.drop1, self.bilstm1, self.drop2, self.bilstm2, self.drop3, self.out]

    # -- parameters -------------------------------------------------------
    @property
    def layers(self):
        return self._cnn + self._rnn

    def parameters(self):
        for layer in self.layers:
            yield from layer.parameters()

    def n_params(self):
        return sum(layer.n_params() for layer in self.layers)

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def state_dict(self):
        return {name: value for name, value, _ in self.parameters()}

    def load_state_dict(self, state):
        own = dict((name, value) for name, value, _ in self.parameters())
        if set(own) != set(state):
            missing = sorted(set(own) ^ set(state))
            raise CorruptCheckpoint(f"parameter names do not match: {missing[:4]}")
        for name, value in own.items():
            src = np.asarray(state[name], dtype=np.float64)
            if src.shape != value.shape:
                raise CorruptCheckpoint(f"{name}: shape {src.shape} != {value.shape}")
            value[...] = src

    # -- passes -----------------------------------------------------------
    def _as_batch(self, images):
        x = np.asarray(images, dtype=np.float64)
        single = x.ndim == 3
        if single:
            x = x[None]
        cfg = self.config
        if x.ndim != 4 or x.shape[1:] != (cfg.input_height, cfg.input_width, cfg.channels):
            raise ShapeMismatch(
                f"expected images of shape ({cfg.input_height}, {cfg.input_width}, {cfg.channels}), got {x.shape}"
            )
        return x, single

    def logits(self, images, training=False, rng=None):
        x, _ = self._as_batch(images)
        for layer in self._cnn:
            x = layer.forward(x, training, rng)
        n, h, w, c = x.shape
        self._fmap_shape = x.shape
        x = x.transpose(0, 2, 1, 3).reshape(n, w, h * c)
        for layer in self._rnn:
            x = layer.forward(x, training, rng)
        return x

    def backward(self, dlogits):
        g = dlogits
        for layer in reversed(self._rnn):
            g = layer.backward(g)
        n, h, w, c = self._fmap_shape
        g = g.reshape(n, w, h, c).transpose(0, 2, 1, 3)
        for layer in reversed(self._cnn):
            g = layer.backward(g)
        return g

    def forward(self, images, training=False, rng=None):
        """Per-frame class probabilities, ``(T, C)`` for one image or ``(N, T, C)``."""
        _, single = self._as_batch(images)
        probs = softmax(self.logits(images, training, rng))
        return probs[0] if single else probs

    def loss_and_grads(self, images, labels, training=False, rng=None):
        """Mean CTC loss over the batch; fills every parameter gradient."""
        x, _ = self._as_batch(images)
        if len(labels) != x.shape[0]:
            raise ShapeMismatch(f"{x.shape[0]} images but {len(labels)} labels")
        self.zero_grad()
        z = self.logits(x, training, rng)
        logp = log_softmax(z)
        n = x.shape[0]
        total = 0.0
        dz = np.empty_like(z)
        for i, label in enumerate(labels):
            loss, grad = ctc.ctc_grad_from_logp(logp[i], label)
            total += loss
            dz[i] = grad
        mean = total / n
        if not math.isfinite(mean):
            raise NonFiniteLoss(f"batch loss is {mean}")
        self.backward(dz / n)
        return mean


def build_crnn(config=None, rng=None, alphabet=None, seed=0):
    config = config or CrnnConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    return Crnn(config, rng, alphabet)


def forward(model, image, training=False, rng=None):
    return model.forward(image, training, rng)


def train_step(model, images, labels, adam, rng):
    """One Adam update on a batch; returns the mean loss before the update."""
    loss = model.loss_and_grads(images, labels, training=True, rng=rng)
    for _, _, g in model.parameters():
        if not np.all(np.isfinite(g)):
            raise NonFiniteLoss("non-finite gradient")
    adam_step(adam, model.parameters())
    return loss


# ----------------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------------
def _config_vector(cfg):
    return np.array([float(v) for v in asdict(cfg).values()], dtype=np.float32)


def _config_from_vector(vec):
    names = [f.name for f in fields(CrnnConfig)]
    if len(vec) != len(names):
        raise CorruptCheckpoint(f"config block has {len(vec)} entries, expected {len(names)}")
    kwargs = {}
    for f, v in zip(fields(CrnnConfig), vec):
        kwargs[f.name] = int(round(float(v))) if f.type in (int, "int") else round(float(v), 6)
    return CrnnConfig(**kwargs)


def _records(model):
    yield CONFIG_RECORD, _config_vector(model.config)
    if model.alphabet is not None:
        yield ALPHABET_RECORD, np.array([ord(s) for s in model.alphabet], dtype=np.float32)
    for name, value, _ in model.parameters():
        yield name, value


def checkpoint_bytes(model):
    records = list(_records(model))
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(records))]
    for name, value in records:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(value, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(model, path):
    data = checkpoint_bytes(model)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc
    return len(data)


def parse_checkpoint(data):
    """Decode checkpoint bytes into ``{name: float32 array}`` (records in order)."""
    if len(data) < 16 or data[:4] != MAGIC:
        raise CorruptCheckpoint("bad magic or truncated header")
    body, crc = data[:-4], struct.unpack("<I", data[-4:])[0]
    version, count = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {FORMAT_VERSION}")
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CorruptCheckpoint("CRC mismatch")
    pos = 12
    records = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", body, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", body, pos)
            pos += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            if pos + 4 * size > len(body):
                raise CorruptCheckpoint(f"record {name!r} runs past the end of the file")
            records[name] = np.frombuffer(body, dtype="<f4", count=size, offset=pos).reshape(dims)
            pos += 4 * size
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptCheckpoint(f"malformed record table: {exc}") from exc
    if pos != len(body):
        raise CorruptCheckpoint("trailing bytes after the last record")
    return records


def model_from_bytes(data):
    """Rebuild a :class:`Crnn` from checkpoint bytes."""
    records = parse_checkpoint(data)
    if CONFIG_RECORD not in records:
        raise CorruptCheckpoint("missing config block")
    config = _config_from_vector(records.pop(CONFIG_RECORD))
    alphabet = None
    if ALPHABET_RECORD in records:
        alphabet = "".join(chr(int(c)) for c in records.pop(ALPHABET_RECORD))
    try:
        model = Crnn(config, np.random.default_rng(0), alphabet)
    except ConfigInvalid as exc:
        raise CorruptCheckpoint(f"stored config is invalid: {exc}") from exc
    model.load_state_dict(records)
    return model


def load_checkpoint(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    return model_from_bytes(data)
