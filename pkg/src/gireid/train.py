"""Training loop, learning-rate schedule, and checkpointing.

One optimization stream: per step, sample an identity-balanced two-modality
batch, augment, run both paths through the extractor, and combine the
identity loss (computed on post-norm logits) with the ranking terms
(computed on the pooled pre-norm embeddings) into a single SGD step with
momentum and weight decay. Batch-norm scale/shift parameters are kept out
of the weight-decay group.

Checkpoints capture parameters (both paths and the head, including running
statistics), optimizer state, RNG states, the epoch counter, a config echo,
and the metric history, so a resumed run replays the uninterrupted one.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backbone import GRAY, IR, DualPathExtractor, StagedExtractorConfig
from .data import SyntheticSpec, augment_train, generate_synthetic, load_manifest
from .head import IdentityHead, identity_loss
from .losses import MarginConfig, ranking_objective, total_loss
from .sampler import BatchSampler

LOSS_TERMS = ("id", "cross", "intra", "inter")


@dataclass
class TrainConfig:
    # data: either a manifest CSV or a synthetic spec
    manifest_path: str | None = None
    synthetic: SyntheticSpec | None = None
    input_size: tuple | None = None  # (H, W); None keeps native size
    grayscale_input: bool = True  # convert visible images; off reproduces the RGB baseline
    augment: bool = True
    flip_prob: float = 0.5
    crop_padding: int = 10

    backbone: StagedExtractorConfig = field(default_factory=StagedExtractorConfig)
    margins: MarginConfig = field(default_factory=MarginConfig)
    losses: str = "id+cross+intra+inter"

    identities_per_batch: int = 8
    images_per_identity: int = 2
    epochs: int = 80

    # schedule: linear warmup, plateau, then two fixed decay values
    warmup_start_lr: float = 0.01
    base_lr: float = 0.1
    mid_lr: float = 0.01
    final_lr: float = 0.001
    warmup_epochs: int = 10
    high_epochs: int = 10
    mid_epochs: int = 30

    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0

    checkpoint_dir: str | None = None
    checkpoint_interval: int = 0  # epochs between saves; 0 = final only
    log_path: str | None = None  # JSON-lines metrics stream

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        for name in ("warmup_start_lr", "base_lr", "mid_lr", "final_lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        parts = set(self.losses.split("+")) if self.losses else set()
        unknown = parts - set(LOSS_TERMS)
        if unknown:
            raise ValueError(f"unknown loss terms: {sorted(unknown)}")
        if not parts:
            raise ValueError("at least one loss term is required")

    @property
    def enabled_terms(self):
        return tuple(t for t in LOSS_TERMS if t in self.losses.split("+"))

    def to_dict(self):
        out = dataclasses.asdict(self)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if data.get("synthetic") is not None:
            spec = dict(data["synthetic"])
            if spec.get("image_size") is not None:
                spec["image_size"] = tuple(spec["image_size"])
            data["synthetic"] = SyntheticSpec(**spec)
        if data.get("backbone") is not None:
            data["backbone"] = StagedExtractorConfig(**data["backbone"])
        if data.get("margins") is not None:
            data["margins"] = MarginConfig(**data["margins"])
        if data.get("input_size") is not None:
            data["input_size"] = tuple(data["input_size"])
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def lr_at_epoch(epoch, config):
    """Learning rate for an epoch: linear warmup from warmup_start_lr to
    base_lr (inclusive endpoints), a plateau at base_lr, then two step
    decays. Epochs past the last milestone stay at final_lr."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    warm = config.warmup_epochs
    if epoch < warm:
        if epoch == 0 or warm == 1:
            return config.warmup_start_lr
        if epoch == warm - 1:
            return config.base_lr
        frac = epoch / (warm - 1)
        return config.warmup_start_lr + frac * (config.base_lr - config.warmup_start_lr)
    if epoch < warm + config.high_epochs:
        return config.base_lr
    if epoch < warm + config.high_epochs + config.mid_epochs:
        return config.mid_lr
    return config.final_lr


class ReIDModel(torch.nn.Module):
    """Extractor plus identity head with the loss wiring on top."""

    def __init__(self, extractor, head):
        super().__init__()
        self.extractor = extractor
        self.head = head

    def features(self, images, modality, view="pre_bn"):
        """Numpy NHWC batch -> numpy embeddings, eval mode."""
        was_training = self.training
        self.eval()
        with torch.no_grad():
            x = torch.from_numpy(np.ascontiguousarray(images)).permute(0, 3, 1, 2).float()
            pooled = self.extractor.embed_single(x, GRAY if modality == "visible" else IR)
            out = self.head.embed(pooled) if view == "post_bn" else pooled
        if was_training:
            self.train()
        return out.numpy()


def build_model(config, num_classes):
    extractor = DualPathExtractor(config.backbone)
    head = IdentityHead(extractor.embedding_dim, num_classes)
    return ReIDModel(extractor, head)


def make_optimizer(model, config):
    """SGD with momentum; batch-norm scale/shift excluded from weight decay."""
    no_decay_ids = set()
    for module in model.modules():
        if isinstance(module, (torch.nn.BatchNorm1d, torch.nn.BatchNorm2d)):
            no_decay_ids.update(id(p) for p in module.parameters(recurse=False))
    for name, param in model.named_parameters():
        if name.endswith(("bn_scale", "bn_shift")):
            no_decay_ids.add(id(param))
    decay = [p for p in model.parameters() if id(p) not in no_decay_ids]
    no_decay = [p for p in model.parameters() if id(p) in no_decay_ids]
    return torch.optim.SGD(
        [
            {"params": decay, "weight_decay": config.weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ],
        lr=config.base_lr,
        momentum=config.momentum,
    )


def _load_dataset(config):
    if config.manifest_path is not None:
        return load_manifest(config.manifest_path)
    if config.synthetic is not None:
        return generate_synthetic(config.synthetic)
    raise ValueError("config needs either manifest_path or synthetic")


def _augment_batch(images, rng, config):
    out = np.empty_like(images)
    for i in range(images.shape[0]):
        out[i] = augment_train(
            images[i], rng, flip_prob=config.flip_prob, pad=config.crop_padding
        )
    return out


def _to_nchw(images):
    return torch.from_numpy(np.ascontiguousarray(images)).permute(0, 3, 1, 2).float()


def train_step(model, batch, labels_t, config, include_ranking):
    """Forward both modalities, compute all enabled losses, return scalars.

    Ranking terms consume the pooled pre-norm embeddings; the identity loss
    consumes the head's post-norm logits.
    """
    n = batch.gray_images.shape[0]
    pooled = model.extractor(gray=_to_nchw(batch.gray_images), ir=_to_nchw(batch.ir_images))
    gray_emb, ir_emb = pooled[:n], pooled[n:]

    parts = {}
    if "id" in config.enabled_terms:
        logits = model.head(pooled)
        parts["id"] = identity_loss(logits, torch.cat([labels_t, labels_t]))
    else:
        parts["id"] = pooled.new_zeros(())
    ranking, ranking_parts = ranking_objective(
        gray_emb, labels_t, ir_emb, labels_t, config.margins, include=include_ranking
    )
    parts.update(ranking_parts)
    loss = total_loss(
        parts["id"], parts["cross"], parts["intra"], parts["inter"],
        config.margins.intra_weight, config.margins.inter_weight,
    )
    return loss, parts


@dataclass
class TrainResult:
    model: ReIDModel
    manifest: object
    history: list
    checkpoint_path: str | None


def train(config, resume_from=None):
    """Run the optimization loop; deterministic for a fixed seed on one device."""
    torch.manual_seed(config.seed)
    manifest = _load_dataset(config)
    model = build_model(config, manifest.num_identities)
    optimizer = make_optimizer(model, config)
    rng = np.random.default_rng(config.seed)
    history = []
    start_epoch = 0

    if resume_from is not None:
        state = torch.load(Path(resume_from) / "checkpoint.pt", weights_only=False)
        model.load_state_dict(state["model"])
        optimizer.load_state_dict(state["optimizer"])
        torch.set_rng_state(state["torch_rng"])
        rng.bit_generator.state = state["numpy_rng"]
        history = list(state["history"])
        start_epoch = state["epoch"] + 1

    sampler = BatchSampler(
        manifest,
        config.identities_per_batch,
        rng,
        images_per_identity=config.images_per_identity,
        image_size=config.input_size,
        convert_visible=config.grayscale_input,
    )
    include_ranking = tuple(t for t in config.enabled_terms if t != "id")
    log_fh = open(config.log_path, "a") if config.log_path else None
    ckpt_path = None
    try:
        for epoch in range(start_epoch, config.epochs):
            lr = lr_at_epoch(epoch, config)
            for group in optimizer.param_groups:
                group["lr"] = lr
            model.train()
            epoch_losses = []
            for step in range(sampler.batches_per_epoch):
                batch = sampler.sample()
                if config.augment:
                    batch.gray_images = _augment_batch(batch.gray_images, rng, config)
                    batch.ir_images = _augment_batch(batch.ir_images, rng, config)
                labels_t = torch.from_numpy(batch.labels)
                loss, parts = train_step(model, batch, labels_t, config, include_ranking)
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch} step {step}: "
                        + ", ".join(f"{k}={v.item():.4g}" for k, v in parts.items())
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                record = {
                    "epoch": epoch,
                    "step": step,
                    "lr": lr,
                    "total": float(loss.item()),
                    **{k: float(v.item()) for k, v in parts.items()},
                }
                epoch_losses.append(record)
                if log_fh:
                    log_fh.write(json.dumps(record) + "\n")
            summary = {
                "epoch": epoch,
                "lr": lr,
                "mean_total": float(np.mean([r["total"] for r in epoch_losses])),
                **{
                    k: float(np.mean([r[k] for r in epoch_losses]))
                    for k in ("id", "cross", "intra", "inter")
                },
            }
            history.append(summary)
            if log_fh:
                log_fh.write(json.dumps({"epoch_summary": summary}) + "\n")
            if config.checkpoint_dir and (
                (config.checkpoint_interval and (epoch + 1) % config.checkpoint_interval == 0)
                or epoch == config.epochs - 1
            ):
                ckpt_path = save_checkpoint(
                    Path(config.checkpoint_dir) / f"epoch_{epoch + 1:04d}",
                    model, optimizer, epoch, config, history, rng,
                )
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(
        model=model, manifest=manifest, history=history, checkpoint_path=ckpt_path
    )


def save_checkpoint(directory, model, optimizer, epoch, config, history, rng):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "model": model.state_dict(),
            "optimizer": optimizer.state_dict(),
            "epoch": epoch,
            "history": history,
            "torch_rng": torch.get_rng_state(),
            "numpy_rng": rng.bit_generator.state,
            "num_classes": model.head.num_classes,
        },
        directory / "checkpoint.pt",
    )
    (directory / "config.json").write_text(json.dumps(config.to_dict(), indent=2))
    return str(directory)


def load_checkpoint(directory):
    """Rebuild the model (eval mode) plus its config from a checkpoint dir."""
    directory = Path(directory)
    config = TrainConfig.from_dict(json.loads((directory / "config.json").read_text()))
    state = torch.load(directory / "checkpoint.pt", weights_only=False)
    model = build_model(config, state["num_classes"])
    model.load_state_dict(state["model"])
    model.eval()
    return model, config, state
