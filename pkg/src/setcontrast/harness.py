"""Desk-scale experiment harness: synthetic two-view data, a small MLP
encoder, Adam, the training loop, and the evaluation protocol
(cross-view matching accuracy and a linear probe).

Everything is deterministic given the config seeds; reruns produce
bit-identical parameters and metrics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import assignment, simgeom
from . import tensor as T
from .errors import (
    ConfigError,
    ContractError,
    EvaluationError,
    NumericError,
    ShapeError,
)
from .losses import GroundTruthAlignment, LossConfig, two_view_loss

Array = np.ndarray

# spread of class centers / within-class scatter for the synthetic latents
_CENTER_SIGMA = 4.0
_WITHIN_SIGMA = 1.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Synthetic two-view dataset: latent class blobs pushed through one
    random orthogonal map + bias per view, plus isotropic view noise.
    Class centers must stay at least 4 * noise_sigma apart."""

    num_classes: int = 8
    samples_per_class: int = 16
    ambient_dim: int = 32
    noise_sigma: float = 0.25
    seed: int = 7

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be >= 1")
        if self.ambient_dim < 2:
            raise ConfigError("ambient_dim must be >= 2")
        if self.noise_sigma < 0.0:
            raise ConfigError("noise_sigma must be >= 0")

    @property
    def num_items(self) -> int:
        return self.num_classes * self.samples_per_class


@dataclass(frozen=True)
class TwoViewDataset:
    view_a: Array
    view_b: Array
    labels: Array
    gt: GroundTruthAlignment
    # the generating affine maps, kept for diagnostics and tests
    q_a: Array
    q_b: Array
    bias_a: Array
    bias_b: Array


def _random_orthogonal(rng: np.random.Generator, n: int) -> Array:
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))  # canonical sign, deterministic


def gen_two_view_dataset(spec: SyntheticSpec) -> TwoViewDataset:
    """Sample latents per item around class centers, then emit the two
    views v = x Q^T + b + noise. Items are row-aligned across views, so
    the ground-truth alignment is the identity."""
    rng = np.random.default_rng(spec.seed)
    centers = rng.normal(scale=_CENTER_SIGMA, size=(spec.num_classes, spec.ambient_dim))
    gaps = np.sqrt(
        ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    )
    min_gap = float(gaps[~np.eye(spec.num_classes, dtype=bool)].min())
    if min_gap < 4.0 * spec.noise_sigma:
        raise ConfigError(
            f"classes are not separable: min center gap {min_gap:.3f} < "
            f"4 * noise_sigma = {4.0 * spec.noise_sigma:.3f}"
        )
    labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    n = spec.num_items
    x = centers[labels] + rng.normal(scale=_WITHIN_SIGMA, size=(n, spec.ambient_dim))
    q_a = _random_orthogonal(rng, spec.ambient_dim)
    q_b = _random_orthogonal(rng, spec.ambient_dim)
    bias_a = rng.normal(size=spec.ambient_dim)
    bias_b = rng.normal(size=spec.ambient_dim)
    view_a = x @ q_a.T + bias_a + rng.normal(scale=spec.noise_sigma, size=x.shape)
    view_b = x @ q_b.T + bias_b + rng.normal(scale=spec.noise_sigma, size=x.shape)
    return TwoViewDataset(
        view_a=view_a,
        view_b=view_b,
        labels=labels,
        gt=GroundTruthAlignment.identity(n),
        q_a=q_a,
        q_b=q_b,
        bias_a=bias_a,
        bias_b=bias_b,
    )


# ---------------------------------------------------------------------------
# encoder

class MLPEncoder:
    """Two-layer MLP with relu and a row-l2-normalized output."""

    def __init__(self, input_dim: int, hidden_dim: int, embed_dim: int,
                 rng: Optional[np.random.Generator] = None):
        if min(input_dim, hidden_dim, embed_dim) < 1:
            raise ConfigError("encoder widths must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.params: Dict[str, Array] = {
            "w1": rng.normal(size=(input_dim, hidden_dim)) * np.sqrt(2.0 / input_dim),
            "b1": np.zeros((1, hidden_dim)),
            "w2": rng.normal(size=(hidden_dim, embed_dim)) * np.sqrt(1.0 / hidden_dim),
            "b2": np.zeros((1, embed_dim)),
        }

    def forward(self, x: Array, leaves: Optional[Dict[str, T.Tensor]] = None) -> T.Tensor:
        """Tracked forward pass when param leaves are given, constant
        evaluation otherwise; one code path for both."""
        p = leaves if leaves is not None else {
            k: T.Tensor(v) for k, v in self.params.items()
        }
        h = T.relu(T.add(T.matmul(T.Tensor(x), p["w1"]), p["b1"]))
        out = T.add(T.matmul(h, p["w2"]), p["b2"])
        return T.row_l2_normalize(out)

    def embed(self, x: Array) -> Array:
        return self.forward(np.asarray(x, dtype=np.float64)).data


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: Dict[str, Array]
    v: Dict[str, Array]
    t: int = 0

    @classmethod
    def init(cls, params: Dict[str, Array]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )


def adam_step(params: Dict[str, Array], grads: Dict[str, Array], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Tuple[Dict[str, Array], AdamState]:
    """One bias-corrected Adam update; returns fresh param/state dicts."""
    t = state.t + 1
    new_params: Dict[str, Array] = {}
    new_m: Dict[str, Array] = {}
    new_v: Dict[str, Array] = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: grad shape mismatch for {k!r}")
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        new_params[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamState(m=new_m, v=new_v, t=t)


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden_dim: int = 64
    embed_dim: int = 16
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.learning_rate < 0.0:
            raise ConfigError("learning_rate must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.eps <= 0.0:
            raise ConfigError("Adam eps must be > 0")
        if self.hidden_dim < 1 or self.embed_dim < 1:
            raise ConfigError("encoder widths must be positive")


@dataclass
class RunReport:
    epoch_losses: List[float]
    matching_accuracy: float
    probe_accuracy: float
    degenerate_batches: int
    wall_seconds: float


def make_encoder(spec: SyntheticSpec, config: TrainConfig) -> MLPEncoder:
    """Encoder with parameters drawn from the run seed's init stream."""
    init_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    return MLPEncoder(spec.ambient_dim, config.hidden_dim, config.embed_dim, init_rng)


def train(dataset: TwoViewDataset, encoder: MLPEncoder,
          config: TrainConfig) -> Tuple[MLPEncoder, RunReport]:
    """Minibatch training of the encoder under the configured loss.

    Batches are index sets applied to both views, so the in-batch ground
    truth stays the identity. Aborts with NumericError on a non-finite
    loss. Matching accuracy and the probe run once, after training.
    """
    started = time.perf_counter()
    n = dataset.view_a.shape[0]
    if config.batch_size > n:
        raise ConfigError(f"batch_size {config.batch_size} exceeds dataset size {n}")
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    state = AdamState.init(encoder.params)
    epoch_losses: List[float] = []
    degenerate = 0
    steps_per_epoch = n // config.batch_size
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        batch_losses = []
        for step in range(steps_per_epoch):
            idx = order[step * config.batch_size:(step + 1) * config.batch_size]
            try:
                tape = T.Tape()
                leaves = {k: tape.leaf(v) for k, v in encoder.params.items()}
                za = encoder.forward(dataset.view_a[idx], leaves)
                zb = encoder.forward(dataset.view_b[idx], leaves)
                gt = GroundTruthAlignment.identity(len(idx))
                loss, _ = two_view_loss(za, zb, gt, config.loss)
                value = loss.item()
            except EvaluationError as e:
                raise NumericError(
                    f"non-finite value at epoch {epoch} step {step} "
                    f"(loss={config.loss.name!r}, seed={config.seed}): {e}"
                )
            if not np.isfinite(value):
                raise NumericError(
                    f"non-finite loss {value} at epoch {epoch} step {step} "
                    f"(loss={config.loss.name!r}, seed={config.seed})"
                )
            grads = tape.backward(loss)
            if "degenerate-eigenvalues" in tape.flags:
                degenerate += 1
            grad_arrays = {k: grads[t].data for k, t in leaves.items()}
            encoder.params, state = adam_step(
                encoder.params, grad_arrays, state,
                lr=config.learning_rate, beta1=config.beta1,
                beta2=config.beta2, eps=config.eps,
            )
            batch_losses.append(value)
        epoch_losses.append(float(np.mean(batch_losses)))
    report = RunReport(
        epoch_losses=epoch_losses,
        matching_accuracy=evaluate_matching(encoder, dataset),
        probe_accuracy=linear_probe(
            np.vstack([encoder.embed(dataset.view_a), encoder.embed(dataset.view_b)]),
            np.concatenate([dataset.labels, dataset.labels]),
            seed=config.seed,
        ),
        degenerate_batches=degenerate,
        wall_seconds=time.perf_counter() - started,
    )
    return encoder, report


def evaluate_matching(encoder, dataset: TwoViewDataset) -> float:
    """LAP matching accuracy between the two embedded views under
    Euclidean distances, scored against the identity alignment."""
    za = encoder.embed(dataset.view_a)
    zb = encoder.embed(dataset.view_b)
    s = T.pairwise_dist(T.Tensor(za), T.Tensor(zb)).data
    return assignment.matching_accuracy(s, np.asarray(dataset.gt.perm))


def linear_probe(embeddings, labels, epochs: int = 100, lr: float = 1e-3,
                 batch_size: int = 128, seed: int = 0) -> float:
    """Multinomial logistic regression on frozen embeddings with a
    stratified 80/20 split; returns held-out accuracy."""
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError("linear_probe: embeddings and labels disagree")
    classes = np.unique(y)
    if classes.size < 2:
        raise ContractError("linear_probe needs at least two classes")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in classes:
        members = np.flatnonzero(y == c)
        members = members[rng.permutation(members.size)]
        cut = max(1, int(round(members.size * 0.8)))
        cut = min(cut, members.size - 1) if members.size > 1 else cut
        train_idx.append(members[:cut])
        test_idx.append(members[cut:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    if test_idx.size == 0:
        raise ContractError("linear_probe: split left no held-out samples")

    label_of = {c: i for i, c in enumerate(classes)}
    yt = np.array([label_of[v] for v in y[train_idx]])
    xt = x[train_idx]
    w = np.zeros((x.shape[1], classes.size))
    b = np.zeros((1, classes.size))
    state = AdamState.init({"w": w, "b": b})
    params = {"w": w, "b": b}
    for _ in range(epochs):
        order = rng.permutation(xt.shape[0])
        for start in range(0, xt.shape[0], batch_size):
            sel = order[start:start + batch_size]
            xb, yb = xt[sel], yt[sel]
            logits = xb @ params["w"] + params["b"]
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(sel.size), yb] -= 1.0
            p /= sel.size
            grads = {"w": xb.T @ p, "b": p.sum(axis=0, keepdims=True)}
            params, state = adam_step(params, grads, state, lr=lr)
    logits = x[test_idx] @ params["w"] + params["b"]
    pred = np.argmax(logits, axis=1)
    truth = np.array([label_of[v] for v in y[test_idx]])
    return float(np.mean(pred == truth))


# ---------------------------------------------------------------------------
# the two-triple contrast instance

def fig1b_instance() -> Tuple[simgeom.SimilarityTriple, simgeom.SimilarityTriple]:
    """Two hand-built (S, S_A, S_B) triples sharing the inter-set matrix
    (hence identical LAP optima) while their intra-set geometry differs:
    the exact QAP optima and the qare values both separate them. This is
    the counterexample showing pairwise terms alone cannot see intra-set
    structure."""
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    line = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    offset = square + np.array([0.25, 0.1])

    def dist(a, b):
        return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))

    s = dist(square, offset)
    s_a = dist(square, square)
    s_b_near = dist(offset, offset)   # same shape as view A
    s_b_far = dist(line, line)        # different internal geometry
    first = simgeom.SimilarityTriple(
        s=T.Tensor(s), s_a=T.Tensor(s_a), s_b=T.Tensor(s_b_near), mode="euclidean"
    )
    second = simgeom.SimilarityTriple(
        s=T.Tensor(s), s_a=T.Tensor(s_a), s_b=T.Tensor(s_b_far), mode="euclidean"
    )
    return first, second
