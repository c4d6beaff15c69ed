"""Dataset generation and the unsupervised training loop.

Each dataset entry is one obstacle configuration with its own point
sample. Batches never mix domains, so the conditioning vector is shared
across a batch and the forward pass stays fully vectorized. Defaults are
desk-scale; the flags scale up to the full recipe (1000 domains, 1e6
points, width 256, 8 layers) when the budget allows.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry, losses, mlp
from .basis import (
    NeuralBasis,
    bundle_to_basis_arrays,
    basis_grads_to_bundle,
    domain_encoding,
    weighted_stats,
)
from .errors import NonFiniteLoss
from .geometry import DomainSpec, SampleSet
from .losses import LossReport, LossWeights


@dataclass
class TrainConfig:
    dim: int = 2
    n_domains: int = 16
    n_test_domains: int = 4
    n_points: int = 20_000
    n_epochs: int = 10
    batch_size: int = 2_000
    n_basis: int = 10
    m_circles: int = 10
    width: int = 64
    n_layers: int = 4
    base_lr: float = 5e-4
    lr_decay: float = 0.96
    leaky_slope: float = 0.01
    weights: LossWeights = field(default_factory=LossWeights)
    rng_seed: int = 0
    n_eval_points: int = 4096
    hist_bins: int = 64
    precision: str = "f32"
    disable_smooth: bool = False
    sharp_corners: bool = False
    ortho_raw: bool = False

    def __post_init__(self):
        if self.batch_size > self.n_points:
            raise ValueError("batch_size must not exceed points per domain")
        for name in ("n_domains", "n_points", "n_epochs", "batch_size", "n_basis"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.precision not in ("f32", "f64"):
            raise ValueError("precision must be f32 or f64")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def effective_weights(self) -> LossWeights:
        w = self.weights
        if self.disable_smooth:
            w = replace(w, smooth=0.0)
        if self.ortho_raw:
            w = replace(w, orth_mode="raw")
        return w


@dataclass
class DomainSampleSet:
    spec: DomainSpec
    samples: SampleSet
    split: str  # "train" or "test"


@dataclass
class SplitMetrics:
    report: LossReport
    div: "FieldStats"
    bc: "FieldStats"

    def to_json(self) -> dict:
        return {
            "report": self.report.to_json(),
            "divergence": self.div.to_json(),
            "boundary": self.bc.to_json(),
        }


@dataclass
class MetricsRecord:
    epoch: int
    lr: float
    train: SplitMetrics
    test: SplitMetrics | None

    def to_json(self) -> dict:
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "train": self.train.to_json(),
            "test": self.test.to_json() if self.test else None,
        }


def _random_spec(rng, config: TrainConfig) -> DomainSpec:
    """Circle soup from the training distribution.

    A third of the domains scatter circles independently; the rest gather
    them into two or three clusters, standing in for the multi-component
    shapes of the training corpus.
    """
    m, dim = config.m_circles, config.dim
    lo, hi = 0.225, 0.675
    style = rng.integers(0, 3)
    if style == 0:
        centers = rng.uniform(lo, hi, size=(m, dim))
    else:
        n_comp = int(style) + 1  # 2 or 3 components
        anchors = rng.uniform(lo + 0.05, hi - 0.05, size=(n_comp, dim))
        owner = rng.integers(0, n_comp, size=m)
        centers = anchors[owner] + rng.normal(0.0, 0.04, size=(m, dim))
        centers = np.clip(centers, lo, hi)
    radii = rng.uniform(0.03, 0.09, size=m)
    corner = 0.0 if config.sharp_corners else 0.2
    return DomainSpec(dim=dim, centers=centers, radii=radii, corner_radius=corner)


def generate_dataset(config: TrainConfig) -> list[DomainSampleSet]:
    """Train and test domains with their point samples, seeded disjointly."""
    sets = []
    for split, count, tag in (("train", config.n_domains, 0),
                              ("test", config.n_test_domains, 1)):
        for i in range(count):
            rng = np.random.default_rng(
                np.random.SeedSequence((config.rng_seed, tag, i))
            )
            spec = _random_spec(rng, config)
            samples = geometry.sample_points(
                spec, config.n_points, np.random.SeedSequence((config.rng_seed, tag, i, 1))
            )
            sets.append(DomainSampleSet(spec, samples, split))
    return sets


def _batch_arrays(samples: SampleSet, idx: np.ndarray) -> SampleSet:
    return SampleSet(
        samples.positions[idx], samples.mask_w[idx],
        samples.band_wb[idx], samples.normals[idx],
    )


def evaluate_split(
    model: mlp.MlpModel, sets: list[DomainSampleSet], config: TrainConfig
) -> SplitMetrics:
    """Mean loss report plus divergence/boundary histograms over a split."""
    weights = config.effective_weights()
    model64 = model.astype(np.float64)
    reports = []
    div_vals, div_w, bc_vals, bc_w = [], [], [], []
    for entry in sets:
        n_eval = min(config.n_eval_points, len(entry.samples))
        sub = entry.samples[:n_eval]
        provider = NeuralBasis(model64, entry.spec)
        values, jac = provider.evaluate_with_jacobian(sub.positions)
        reports.append(losses.loss_total(values, jac, sub, weights))
        div_vals.append(np.abs(np.einsum("nkaa->nk", jac)))
        div_w.append(sub.mask_w)
        band = sub.band_wb > 0
        if band.any():
            v = values[band]
            num = np.einsum("nkd,nd->nk", v, sub.normals[band])
            den = np.linalg.norm(v, axis=-1) + 1e-12
            bc_vals.append((num / den) ** 2)
            bc_w.append(sub.band_wb[band])

    def mean(field_name):
        return float(np.mean([getattr(r, field_name) for r in reports]))

    report = LossReport(
        div=mean("div"), bc=mean("bc"), orth=mean("orth"), length=mean("length"),
        small=mean("small"), smooth=mean("smooth"), total=mean("total"),
        W=float(np.sum([r.W for r in reports])),
        S_b=float(np.sum([r.S_b for r in reports])),
        S_o=float(np.sum([r.S_o for r in reports])),
    )
    div_stats = weighted_stats(
        np.concatenate([v.ravel() for v in div_vals]),
        np.concatenate([np.repeat(w, model.n_basis) for w in div_w]),
        bins=config.hist_bins,
    )
    if bc_vals:
        bc_stats = weighted_stats(
            np.concatenate([v.ravel() for v in bc_vals]),
            np.concatenate([np.repeat(w, model.n_basis) for w in bc_w]),
            bins=config.hist_bins,
            vmax=1.0,
        )
    else:
        bc_stats = weighted_stats(np.zeros(1), np.ones(1), bins=config.hist_bins)
    return SplitMetrics(report, div_stats, bc_stats)


def evaluate(model: mlp.MlpModel, dataset, config: TrainConfig, epoch=0, lr=0.0):
    train_sets = [d for d in dataset if d.split == "train"]
    test_sets = [d for d in dataset if d.split == "test"]
    return MetricsRecord(
        epoch=epoch,
        lr=lr,
        train=evaluate_split(model, train_sets, config),
        test=evaluate_split(model, test_sets, config) if test_sets else None,
    )


def _stderr_log(msg: str) -> None:
    print(msg, file=sys.stderr)


def train(
    config: TrainConfig,
    dataset: list[DomainSampleSet],
    checkpoint_path=None,
    log_path=None,
    log=_stderr_log,
):
    """The epoch/batch loop; returns the model and per-epoch metrics."""
    train_sets = [d for d in dataset if d.split == "train"]
    if not train_sets:
        raise ValueError("dataset has no training split")
    model = mlp.init_kaiming(
        config.dim, config.n_basis, config.m_circles,
        n_layers=config.n_layers, width=config.width,
        leaky_slope=config.leaky_slope, rng_seed=config.rng_seed,
        dtype=config.dtype,
    )
    state = mlp.OptimizerState.for_model(
        model, base_lr=config.base_lr, decay=config.lr_decay
    )
    weights = config.effective_weights()
    encodings = [domain_encoding(d.spec) for d in train_sets]
    metrics: list[MetricsRecord] = []
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(config.n_epochs):
            state.epoch = epoch
            t0 = time.perf_counter()
            order_rng = np.random.default_rng(
                np.random.SeedSequence((config.rng_seed, 7, epoch))
            )
            degenerate_batches = 0
            for d_idx in order_rng.permutation(len(train_sets)):
                entry = train_sets[d_idx]
                rho = encodings[d_idx]
                perm = np.random.default_rng(
                    np.random.SeedSequence((config.rng_seed, 11, epoch, int(d_idx)))
                ).permutation(len(entry.samples))
                for start in range(0, len(perm), config.batch_size):
                    idx = perm[start:start + config.batch_size]
                    batch = _batch_arrays(entry.samples, idx)
                    bundle, cache = mlp.forward_with_tangents(
                        model, batch.positions, rho, keep_cache=True
                    )
                    values, jac = bundle_to_basis_arrays(
                        bundle, config.n_basis, config.dim
                    )
                    report, dv, dJ = losses.loss_total_and_grads(
                        values, jac, batch, weights
                    )
                    if not np.isfinite(report.total):
                        raise NonFiniteLoss(
                            f"loss became {report.total} at epoch {epoch}"
                        )
                    if report.degenerate:
                        degenerate_batches += 1
                    gv, gt = basis_grads_to_bundle(dv, dJ)
                    grads = mlp.backward(
                        model, batch.positions, rho, gv, gt, cache=cache
                    )
                    mlp.adam_step(model, grads, state)
            record = evaluate(model, dataset, config, epoch=epoch, lr=state.learning_rate)
            metrics.append(record)
            if log_fh:
                log_fh.write(json.dumps(record.to_json()) + "\n")
                log_fh.flush()
            if checkpoint_path:
                mlp.save_checkpoint(model, checkpoint_path, meta=_meta(config))
            if log:
                log(
                    f"epoch {epoch}: total {record.train.report.total:.4f}"
                    + (f" | test {record.test.report.total:.4f}" if record.test else "")
                    + f" | lr {state.learning_rate:.2e}"
                    + f" | {time.perf_counter() - t0:.1f}s"
                    + (f" | degenerate {degenerate_batches}" if degenerate_batches else "")
                )
    finally:
        if log_fh:
            log_fh.close()
    return model, metrics


def _meta(config: TrainConfig) -> dict:
    data = {
        k: v for k, v in vars(config).items()
        if isinstance(v, (int, float, str, bool))
    }
    data["weights"] = vars(config.weights)
    return data
