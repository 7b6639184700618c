"""Emulated MX training flow for linear layers.

Every GEMM input is quantized to MX right before the GEMM; everything else
(bias add, nonlinearity, loss, optimizer update) runs in FP32.  FP32 master
weights are kept per layer and, after every update, quantized twice: W along
its input axis for the forward GEMM, and the FP32 transpose W^T along its
output axis for the backward GEMM that produces the input gradient.
Gradients are quantized with the activation config unless a separate
gradient config is given.

A config of ``None`` means FP32 passthrough for that role.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .block import QuantConfig
from .errors import DivergenceError, ShapeMismatch
from .linalg import fp32_gemm, mx_gemm
from .tensor import MxTensor, quantize_tensor, transpose_2d

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlowConfig:
    weight_cfg: QuantConfig | None
    act_cfg: QuantConfig | None
    grad_cfg: QuantConfig | None = None

    @property
    def grad(self) -> QuantConfig | None:
        """Gradient format; falls back to the activation format."""
        return self.grad_cfg if self.grad_cfg is not None else self.act_cfg

    @property
    def passthrough(self) -> bool:
        return self.weight_cfg is None and self.act_cfg is None and self.grad_cfg is None

    @classmethod
    def fp32(cls) -> "FlowConfig":
        return cls(None, None, None)

    @classmethod
    def make(cls, weight, act, grad=None, block_size=32, rounding="rhaz") -> "FlowConfig":
        """Build from format names; ``"fp32"`` (or None) means passthrough."""

        def cfg(name):
            if name is None or str(name).lower() == "fp32":
                return None
            return QuantConfig.make(name, block_size, rounding)

        return cls(cfg(weight), cfg(act), cfg(grad))


@dataclass
class QuantEvent:
    role: str  # "weight", "weight_t", "act" or "grad"
    fmt: str  # element format name or "fp32"
    shape: tuple[int, ...]
    axis: int


@dataclass
class QuantLog:
    """Records every quantization performed by the flow (test instrumentation)."""

    events: list[QuantEvent] = field(default_factory=list)

    def record(self, role, cfg, shape, axis):
        self.events.append(QuantEvent(role, cfg.element_fmt.name if cfg else "fp32", tuple(shape), axis))

    def counts(self) -> Counter:
        return Counter((e.role, e.fmt) for e in self.events)

    def clear(self):
        self.events.clear()


def _quantize(x, axis, cfg, role, qlog):
    if qlog is not None:
        qlog.record(role, cfg, np.shape(x), axis)
    if cfg is None:
        return np.asarray(x, np.float32)
    return quantize_tensor(x, axis, cfg)


def _matmul(a, b) -> np.ndarray:
    """GEMM of two operands that are either both MxTensor or both FP32 arrays."""
    if isinstance(a, MxTensor) and isinstance(b, MxTensor):
        return mx_gemm(a, b).out
    if isinstance(a, MxTensor) or isinstance(b, MxTensor):
        raise ValueError("mixing FP32 passthrough and MX operands in one GEMM is not supported")
    return fp32_gemm(a, b)


@dataclass(frozen=True)
class QuantizedLinearState:
    master_w: np.ndarray  # FP32 [in, out]
    qw: MxTensor | np.ndarray  # W along the input axis
    qwt: MxTensor | np.ndarray  # W^T along the output axis, quantized on its own
    weight_cfg: QuantConfig | None

    @classmethod
    def from_weights(cls, w, weight_cfg: QuantConfig | None, qlog: QuantLog | None = None):
        w = np.array(w, dtype=np.float32)
        if w.ndim != 2:
            raise ShapeMismatch("weights must be [in, out]")
        qw = _quantize(w, 0, weight_cfg, "weight", qlog)
        qwt = _quantize(transpose_2d(w), 0, weight_cfg, "weight_t", qlog)
        return cls(w, qw, qwt, weight_cfg)

    @property
    def shape(self):
        return self.master_w.shape


def linear_forward(state: QuantizedLinearState, a, flow: FlowConfig, qlog: QuantLog | None = None):
    a = np.asarray(a, np.float32)
    if a.ndim != 2 or a.shape[1] != state.shape[0]:
        raise ShapeMismatch(f"input {a.shape} does not match weights {state.shape}")
    qa = _quantize(a, 1, flow.act_cfg, "act", qlog)
    return _matmul(qa, state.qw)


def linear_backward(
    state: QuantizedLinearState,
    a,
    dy,
    flow: FlowConfig,
    qlog: QuantLog | None = None,
    need_da: bool = True,
):
    """Returns ``(da, dw)``; ``da`` is None when ``need_da`` is False.

    da = dy @ W^T uses the separately quantized W^T.  For dw = a^T @ dy the
    activation is transposed in FP32 first and then quantized along the batch
    axis, which is the reduction axis of that GEMM.
    """
    a = np.asarray(a, np.float32)
    dy = np.asarray(dy, np.float32)
    n_in, n_out = state.shape
    if a.ndim != 2 or dy.ndim != 2 or a.shape != (dy.shape[0], n_in) or dy.shape[1] != n_out:
        raise ShapeMismatch(f"a {a.shape}, dy {dy.shape} do not match weights {state.shape}")
    gcfg = flow.grad
    da = None
    if need_da:
        qdy = _quantize(dy, 1, gcfg, "grad", qlog)
        da = _matmul(qdy, state.qwt)
    qat = _quantize(transpose_2d(a), 1, flow.act_cfg, "act", qlog)
    qdy_b = _quantize(dy, 0, gcfg, "grad", qlog)
    dw = _matmul(qat, qdy_b)
    return da, dw


def sgd_step(state: QuantizedLinearState, dw, lr: float, qlog: QuantLog | None = None):
    """master_w -= lr * dw in FP32, then re-derive both quantized views."""
    if not lr >= 0:
        raise ValueError("lr must be non-negative")
    dw = np.asarray(dw, np.float32)
    if dw.shape != state.shape:
        raise ShapeMismatch(f"gradient {dw.shape} vs weights {state.shape}")
    new_w = state.master_w - np.float32(lr) * dw
    return QuantizedLinearState.from_weights(new_w, state.weight_cfg, qlog)


# -- desk-scale training demo ---------------------------------------------------

DEMO_IN, DEMO_HIDDEN, DEMO_OUT = 16, 32, 1
DEMO_SAMPLES = 2048
DEMO_TEACHER_HIDDEN = 8
DEMO_NOISE_STD = 1.0
DEMO_LR = 0.1
DEMO_STEPS = 500
DEMO_SEED = 0


@dataclass
class TrainRecord:
    step: int
    loss: float
    grad_norm: float


def demo_data(seed: int = DEMO_SEED):
    """Synthetic regression task: a random tanh teacher network plus noise."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((DEMO_SAMPLES, DEMO_IN)).astype(np.float32)
    t1 = rng.standard_normal((DEMO_IN, DEMO_TEACHER_HIDDEN)) / math.sqrt(DEMO_IN)
    t2 = rng.standard_normal((DEMO_TEACHER_HIDDEN, DEMO_OUT))
    y = np.tanh(x @ t1) @ t2 + DEMO_NOISE_STD * rng.standard_normal((DEMO_SAMPLES, DEMO_OUT))
    return x, y.astype(np.float32)


def demo_init(seed: int = DEMO_SEED):
    """Initial FP32 parameters (w1, b1, w2, b2)."""
    rng = np.random.default_rng(seed + 1)
    w1 = (rng.standard_normal((DEMO_IN, DEMO_HIDDEN)) / math.sqrt(DEMO_IN)).astype(np.float32)
    w2 = (rng.standard_normal((DEMO_HIDDEN, DEMO_OUT)) / math.sqrt(DEMO_HIDDEN)).astype(np.float32)
    return w1, np.zeros(DEMO_HIDDEN, np.float32), w2, np.zeros(DEMO_OUT, np.float32)


class DemoMLP:
    """in -> hidden (tanh) -> out, MSE loss; GEMMs follow the flow config."""

    def __init__(self, flow: FlowConfig, params, qlog: QuantLog | None = None):
        w1, b1, w2, b2 = params
        self.flow = flow
        self.qlog = qlog
        self.l1 = QuantizedLinearState.from_weights(w1, flow.weight_cfg, qlog)
        self.l2 = QuantizedLinearState.from_weights(w2, flow.weight_cfg, qlog)
        self.b1 = np.array(b1, np.float32)
        self.b2 = np.array(b2, np.float32)

    def loss_and_grads(self, x, y):
        flow, qlog = self.flow, self.qlog
        z1 = linear_forward(self.l1, x, flow, qlog) + self.b1
        h = np.tanh(z1)
        out = linear_forward(self.l2, h, flow, qlog) + self.b2
        diff = out - y
        n = np.float32(x.shape[0])
        loss = float(np.mean(diff * diff, dtype=np.float32))
        dout = (np.float32(2.0) / n) * diff
        dh, dw2 = linear_backward(self.l2, h, dout, flow, qlog)
        dz1 = dh * (np.float32(1.0) - h * h)
        _, dw1 = linear_backward(self.l1, x, dz1, flow, qlog, need_da=False)
        grads = (dw1, dz1.sum(axis=0), dw2, dout.sum(axis=0))
        return loss, grads

    def step(self, grads, lr):
        dw1, db1, dw2, db2 = grads
        self.l1 = sgd_step(self.l1, dw1, lr, self.qlog)
        self.l2 = sgd_step(self.l2, dw2, lr, self.qlog)
        self.b1 = self.b1 - np.float32(lr) * db1
        self.b2 = self.b2 - np.float32(lr) * db2


def train_demo(
    flow: FlowConfig,
    seed: int = DEMO_SEED,
    steps: int = DEMO_STEPS,
    lr: float = DEMO_LR,
    qlog: QuantLog | None = None,
) -> list[TrainRecord]:
    """Full-batch SGD on the synthetic task; one record per step.

    Raises :class:`DivergenceError` (carrying the records so far) if the loss
    becomes non-finite.
    """
    x, y = demo_data(seed)
    model = DemoMLP(flow, demo_init(seed), qlog)
    records = []
    for step in range(steps):
        loss, grads = model.loss_and_grads(x, y)
        gnorm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
        records.append(TrainRecord(step, loss, gnorm))
        if not (math.isfinite(loss) and math.isfinite(gnorm)):
            raise DivergenceError(f"non-finite loss at step {step}", records)
        model.step(grads, lr)
    log.debug("train_demo final loss %.6f after %d steps", records[-1].loss if records else math.nan, steps)
    return records
