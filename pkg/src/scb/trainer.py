"""Classification head: single-hidden-layer network trained from scratch.

relu(W1 x + b1) -> 3-way softmax, cross-entropy loss, hand-derived
gradients, Adam with bias correction, plateau LR schedule, and early
stopping on validation loss. hidden=0 collapses the network to softmax
regression. Training is a deterministic function of (data, config, seed).

Checkpoints are versioned binaries: magic ``SCBM``, u32 version, u32 d,
u32 hidden, then little-endian f32 parameter blocks (W1, b1, W2, b2), with
a JSON sidecar carrying the training metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ScbError

N_CLASSES = 3
CHECKPOINT_MAGIC = b"SCBM"
CHECKPOINT_VERSION = 1


class TrainError(ScbError):
    pass


class ShapeMismatch(TrainError):
    pass


class EmptyBatch(TrainError):
    pass


class EmptySplit(TrainError):
    pass


class DegenerateLabels(TrainError):
    pass


@dataclass
class MlpParams:
    w1: np.ndarray | None  # (hidden, d) or None when hidden == 0
    b1: np.ndarray | None  # (hidden,)
    w2: np.ndarray  # (3, hidden) or (3, d)
    b2: np.ndarray  # (3,)

    @property
    def hidden(self) -> int:
        return 0 if self.w1 is None else self.w1.shape[0]

    @property
    def input_width(self) -> int:
        return self.w2.shape[1] if self.w1 is None else self.w1.shape[1]

    def blocks(self) -> list[np.ndarray]:
        if self.w1 is None:
            return [self.w2, self.b2]
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "MlpParams":
        return MlpParams(
            w1=None if self.w1 is None else self.w1.copy(),
            b1=None if self.b1 is None else self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
        )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.0005
    batch: int = 32
    max_epochs: int = 100
    patience: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    plateau_factor: float = 0.1
    plateau_patience: int = 2
    min_lr: float = 1e-6
    improve_eps: float = 1e-6
    seed: int = 0
    hidden: int = 128
    class_weights: bool = False


@dataclass
class TrainMeta:
    epochs_run: int
    best_epoch: int
    best_val_loss: float
    lr_trace: list[float]
    seed: int
    notes: dict = field(default_factory=dict)


@dataclass
class TrainedModel:
    params: MlpParams
    input_width: int
    train_meta: TrainMeta


def init_params(d: int, hidden: int, rng: np.random.Generator) -> MlpParams:
    """He-uniform weight draws, zero biases."""
    if hidden > 0:
        lim1 = np.sqrt(6.0 / d)
        w1 = rng.uniform(-lim1, lim1, size=(hidden, d))
        b1 = np.zeros(hidden)
        lim2 = np.sqrt(6.0 / hidden)
        w2 = rng.uniform(-lim2, lim2, size=(N_CLASSES, hidden))
    else:
        w1 = b1 = None
        lim2 = np.sqrt(6.0 / d)
        w2 = rng.uniform(-lim2, lim2, size=(N_CLASSES, d))
    return MlpParams(w1=w1, b1=b1, w2=w2, b2=np.zeros(N_CLASSES))


def _check_width(p: MlpParams, x: np.ndarray):
    if x.ndim != 2 or x.shape[1] != p.input_width:
        raise ShapeMismatch(f"expected (n, {p.input_width}) input, got {x.shape}")


def forward(p: MlpParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch forward pass; returns (logits, probabilities)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _check_width(p, x)
    if p.w1 is not None:
        h = np.maximum(0.0, x @ p.w1.T + p.b1)
        logits = h @ p.w2.T + p.b2
    else:
        logits = x @ p.w2.T + p.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return logits, probs


def ce_loss(logits: np.ndarray, labels: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Mean cross-entropy from logits via log-sum-exp."""
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels)
    if logits.shape[0] == 0:
        raise EmptyBatch("empty batch")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    nll = -log_probs[np.arange(len(labels)), labels]
    if weights is not None:
        nll = nll * weights[labels]
    return float(nll.mean())


def backward(p: MlpParams, x: np.ndarray, labels: np.ndarray, weights: np.ndarray | None = None) -> list[np.ndarray]:
    """Analytic gradient of the mean cross-entropy, in blocks() order."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _check_width(p, x)
    labels = np.asarray(labels)
    n = x.shape[0]
    if n == 0:
        raise EmptyBatch("empty batch")

    if p.w1 is not None:
        pre = x @ p.w1.T + p.b1
        h = np.maximum(0.0, pre)
        logits = h @ p.w2.T + p.b2
    else:
        h = x
        logits = x @ p.w2.T + p.b2

    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    if weights is not None:
        delta *= weights[labels][:, None]
    delta /= n

    g_w2 = delta.T @ h
    g_b2 = delta.sum(axis=0)
    if p.w1 is None:
        return [g_w2, g_b2]
    d_h = delta @ p.w2
    d_pre = d_h * (pre > 0.0)
    g_w1 = d_pre.T @ x
    g_b1 = d_pre.sum(axis=0)
    return [g_w1, g_b1, g_w2, g_b2]


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, p: MlpParams) -> "AdamState":
        return cls(m=[np.zeros_like(b) for b in p.blocks()], v=[np.zeros_like(b) for b in p.blocks()])


def adam_step(p: MlpParams, grads: list[np.ndarray], state: AdamState, lr: float, cfg: TrainConfig) -> None:
    """In-place bias-corrected Adam update."""
    state.step += 1
    t = state.step
    correction1 = 1.0 - cfg.beta1**t
    correction2 = 1.0 - cfg.beta2**t
    for block, grad, m, v in zip(p.blocks(), grads, state.m, state.v):
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * grad
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * grad**2
        m_hat = m / correction1
        v_hat = v / correction2
        block -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


@dataclass
class PlateauEarlyStop:
    """Validation-loss bookkeeping shared by fit() and its protocol tests.

    An epoch improves when val loss drops by more than improve_eps below the
    best seen. The LR is multiplied by plateau_factor once the bad-epoch
    streak reaches plateau_patience (then the streak restarts for scheduling
    purposes); training stops after `patience` consecutive bad epochs.
    """

    cfg: TrainConfig
    lr: float = field(init=False)
    best_loss: float = field(init=False, default=np.inf)
    bad_epochs: int = field(init=False, default=0)
    plateau_bad: int = field(init=False, default=0)

    def __post_init__(self):
        self.lr = self.cfg.lr

    def update(self, val_loss: float) -> tuple[bool, bool]:
        """Feed one epoch's val loss; returns (improved, stop)."""
        if val_loss < self.best_loss - self.cfg.improve_eps:
            self.best_loss = val_loss
            self.bad_epochs = 0
            self.plateau_bad = 0
            return True, False
        self.bad_epochs += 1
        self.plateau_bad += 1
        if self.plateau_bad >= self.cfg.plateau_patience:
            self.lr = max(self.lr * self.cfg.plateau_factor, self.cfg.min_lr)
            self.plateau_bad = 0
        return False, self.bad_epochs >= self.cfg.patience


def fit(
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig,
) -> TrainedModel:
    """Train the head; returns the parameters from the best-val-loss epoch."""
    x_train = np.asarray(x_train, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if len(x_train) == 0 or len(x_val) == 0:
        raise EmptySplit("train and validation splits must be nonempty")
    if len(np.unique(y_train)) < 2:
        raise DegenerateLabels("train split holds a single class")

    weights = None
    if cfg.class_weights:
        counts = np.bincount(y_train, minlength=N_CLASSES).astype(np.float64)
        inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
        weights = inv * (counts > 0).sum() / inv.sum()

    rng = np.random.default_rng(cfg.seed)
    params = init_params(x_train.shape[1], cfg.hidden, rng)
    state = AdamState.for_params(params)
    schedule = PlateauEarlyStop(cfg)
    best_params = params.copy()
    best_epoch = 0
    lr_trace: list[float] = []

    epochs_run = 0
    for epoch in range(1, cfg.max_epochs + 1):
        epochs_run = epoch
        lr_trace.append(schedule.lr)
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), cfg.batch):
            batch = order[start : start + cfg.batch]
            grads = backward(params, x_train[batch], y_train[batch], weights)
            adam_step(params, grads, state, schedule.lr, cfg)
        val_logits, _ = forward(params, x_val)
        improved, stop = schedule.update(ce_loss(val_logits, y_val, weights))
        if improved:
            best_params = params.copy()
            best_epoch = epoch
        if stop:
            break

    meta = TrainMeta(
        epochs_run=epochs_run,
        best_epoch=best_epoch,
        best_val_loss=float(schedule.best_loss),
        lr_trace=lr_trace,
        seed=cfg.seed,
        notes={"embedding_scaling": "none", "restored": "best_epoch"},
    )
    return TrainedModel(params=best_params, input_width=x_train.shape[1], train_meta=meta)


def predict(model: TrainedModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax labels (ties -> lowest class index) and probability rows."""
    _, probs = forward(model.params, x)
    return probs.argmax(axis=1), probs


def save_checkpoint(model: TrainedModel, path: str | Path) -> None:
    p = model.params
    header = CHECKPOINT_MAGIC + struct.pack(
        "<III", CHECKPOINT_VERSION, model.input_width, p.hidden
    )
    payload = b"".join(block.astype("<f4").tobytes() for block in p.blocks())
    path = Path(path)
    path.write_bytes(header + payload)
    meta = model.train_meta
    sidecar = {
        "epochs_run": meta.epochs_run,
        "best_epoch": meta.best_epoch,
        "best_val_loss": meta.best_val_loss,
        "lr_trace": meta.lr_trace,
        "seed": meta.seed,
        "notes": meta.notes,
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_checkpoint(path: str | Path) -> TrainedModel:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != CHECKPOINT_MAGIC:
        raise TrainError(f"{path}: not a model checkpoint")
    version, d, hidden = struct.unpack_from("<III", data, 4)
    if version != CHECKPOINT_VERSION:
        raise TrainError(f"{path}: unsupported checkpoint version {version}")
    shapes = (
        [(hidden, d), (hidden,), (N_CLASSES, hidden), (N_CLASSES,)]
        if hidden > 0
        else [(N_CLASSES, d), (N_CLASSES,)]
    )
    offset = 16
    blocks = []
    for shape in shapes:
        count = int(np.prod(shape))
        block = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        blocks.append(block.astype(np.float64).reshape(shape))
        offset += 4 * count
    if hidden > 0:
        params = MlpParams(w1=blocks[0], b1=blocks[1], w2=blocks[2], b2=blocks[3])
    else:
        params = MlpParams(w1=None, b1=None, w2=blocks[0], b2=blocks[1])

    sidecar_path = path.with_suffix(path.suffix + ".json")
    meta = TrainMeta(epochs_run=0, best_epoch=0, best_val_loss=float("nan"), lr_trace=[], seed=0)
    if sidecar_path.exists():
        raw = json.loads(sidecar_path.read_text(encoding="utf-8"))
        meta = TrainMeta(
            epochs_run=raw.get("epochs_run", 0),
            best_epoch=raw.get("best_epoch", 0),
            best_val_loss=raw.get("best_val_loss", float("nan")),
            lr_trace=raw.get("lr_trace", []),
            seed=raw.get("seed", 0),
            notes=raw.get("notes", {}),
        )
    return TrainedModel(params=params, input_width=d, train_meta=meta)
