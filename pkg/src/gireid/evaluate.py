"""Cross-modality retrieval evaluation: CMC curves and mAP.

Queries come from one modality and the gallery from the other. Galleries
can be restricted to a camera set, subsampled over repeated trials, and
filtered per query to drop same-identity same-camera entries. Ranking is by
ascending Euclidean distance with ties broken by gallery index, so results
are reproducible across platforms.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import INFRARED, VISIBLE, load_pixels


@dataclass
class EvalProtocol:
    query_modality: str = VISIBLE
    gallery_modality: str = INFRARED
    split: str = "test"  # "test": query/gallery splits; "train": train split both sides
    gallery_camera_filter: tuple | None = None
    exclude_same_camera: bool = False
    num_trials: int = 1
    gallery_shots: int | None = None  # per-identity gallery images per trial
    seed: int = 0
    max_rank: int = 20
    feature_view: str = "pre_bn"  # or "post_bn"
    convert_visible: bool = True

    def __post_init__(self):
        if self.query_modality == self.gallery_modality:
            raise ValueError("query and gallery modalities must differ")
        if self.query_modality not in (VISIBLE, INFRARED):
            raise ValueError(f"unknown modality {self.query_modality!r}")
        if self.split not in ("test", "train"):
            raise ValueError(f"unknown split {self.split!r}")


@dataclass
class EvalReport:
    cmc: np.ndarray  # rank-k accuracy at k = 1..max_rank
    mean_ap: float
    per_query: list = field(default_factory=list)  # dicts: label, ranked indices, ap
    protocol: dict = field(default_factory=dict)

    @property
    def rank1(self):
        return float(self.cmc[0])

    def to_dict(self):
        return {
            "cmc": [float(v) for v in self.cmc],
            "mAP": float(self.mean_ap),
            "rank1": self.rank1,
            "protocol": self.protocol,
        }

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def save_per_query_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["query_index", "query_label", "ap", "top10_gallery_indices"])
            for i, entry in enumerate(self.per_query):
                top = " ".join(str(g) for g in entry["ranked"][:10])
                writer.writerow([i, entry["label"], f"{entry['ap']:.6f}", top])


def rank_gallery(dist):
    """Ascending-distance gallery order per query; ties keep gallery index
    order (stable sort)."""
    dist = np.asarray(dist)
    if not np.isfinite(dist).all():
        raise ValueError("distance matrix contains non-finite values")
    return np.argsort(dist, axis=1, kind="stable")


def _first_hits(ranked, query_labels, gallery_labels):
    hits = []
    for q, order in enumerate(ranked):
        match = gallery_labels[np.asarray(order)] == query_labels[q]
        if not match.any():
            raise ValueError(
                f"query {q} (label {query_labels[q]}) has no gallery match"
            )
        hits.append(int(np.argmax(match)))
    return np.asarray(hits)


def compute_cmc(ranked, query_labels, gallery_labels, max_rank):
    """cmc[k-1] = fraction of queries whose first correct gallery item
    appears within the top k."""
    query_labels = np.asarray(query_labels)
    gallery_labels = np.asarray(gallery_labels)
    hits = _first_hits(ranked, query_labels, gallery_labels)
    ranks = np.arange(1, max_rank + 1)
    return (hits[:, None] < ranks[None, :]).mean(axis=0)


def compute_map(ranked, query_labels, gallery_labels):
    """Mean over queries of average precision: for each correct match at
    1-indexed rank r, precision = correct-so-far / r, averaged over the
    query's matches."""
    query_labels = np.asarray(query_labels)
    gallery_labels = np.asarray(gallery_labels)
    aps = []
    for q, order in enumerate(ranked):
        match = gallery_labels[np.asarray(order)] == query_labels[q]
        if not match.any():
            raise ValueError(
                f"query {q} (label {query_labels[q]}) has no gallery match"
            )
        cum_correct = np.cumsum(match)
        precision = cum_correct / np.arange(1, len(match) + 1)
        aps.append(precision[match].mean())
    return float(np.mean(aps))


def extract_features(model, manifest, record_indices, protocol, batch_size=64):
    """Embed the given records with the model in eval mode.

    The model must provide features(images_nhwc_float32, modality, view).
    Visible images are grayscale-converted before embedding (they ride the
    gray path) unless the protocol disables conversion; infrared images use
    the infrared path.
    """
    feats = []
    for start in range(0, len(record_indices), batch_size):
        chunk = record_indices[start : start + batch_size]
        images = np.stack(
            [
                load_pixels(
                    manifest.records[i],
                    size=None,
                    convert_visible=protocol.convert_visible,
                )
                for i in chunk
            ]
        )
        modality = manifest.records[chunk[0]].modality
        feats.append(model.features(images, modality, view=protocol.feature_view))
    return np.concatenate(feats, axis=0)


def _select(manifest, protocol, side):
    modality = protocol.query_modality if side == "query" else protocol.gallery_modality
    split = "train" if protocol.split == "train" else side
    pairs = manifest.split_records(split, modality)
    if side == "gallery" and protocol.gallery_camera_filter is not None:
        allowed = set(protocol.gallery_camera_filter)
        pairs = [(i, r) for i, r in pairs if r.camera in allowed]
    if not pairs:
        raise ValueError(f"empty {side} set for protocol {protocol}")
    return [i for i, _ in pairs], [r for _, r in pairs]


def evaluate(model, manifest, protocol):
    """Run the full retrieval protocol and report CMC, mAP, and per-query
    rankings. With multiple trials the gallery is re-subsampled per trial
    and metrics are averaged; per-query details come from the last trial."""
    q_idx, q_records = _select(manifest, protocol, "query")
    g_idx, g_records = _select(manifest, protocol, "gallery")

    q_feats = extract_features(model, manifest, q_idx, protocol)
    g_feats = extract_features(model, manifest, g_idx, protocol)
    q_labels = np.asarray([r.identity for r in q_records])
    g_labels = np.asarray([r.identity for r in g_records])
    g_cameras = np.asarray([r.camera for r in g_records])
    q_cameras = np.asarray([r.camera for r in q_records])

    diff = q_feats[:, None, :] - g_feats[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))

    rng = np.random.default_rng(protocol.seed)
    trials = max(1, protocol.num_trials)
    cmcs, maps = [], []
    per_query = []
    for _ in range(trials):
        if protocol.gallery_shots is not None:
            keep = _subsample_gallery(g_labels, protocol.gallery_shots, rng)
        else:
            keep = np.arange(len(g_labels))
        trial_dist = dist[:, keep]
        trial_labels = g_labels[keep]
        trial_cameras = g_cameras[keep]
        ranked_full = rank_gallery(trial_dist)
        ranked = []
        for q in range(len(q_labels)):
            order = ranked_full[q]
            if protocol.exclude_same_camera:
                junk = (trial_labels[order] == q_labels[q]) & (
                    trial_cameras[order] == q_cameras[q]
                )
                order = order[~junk]
            ranked.append(order)
        cmcs.append(compute_cmc(ranked, q_labels, trial_labels, protocol.max_rank))
        maps.append(compute_map(ranked, q_labels, trial_labels))
        per_query = [
            {
                "label": int(q_labels[q]),
                "ranked": [int(keep[g]) for g in ranked[q]],
                "ap": _single_ap(ranked[q], q_labels[q], trial_labels),
            }
            for q in range(len(q_labels))
        ]
    protocol_echo = {
        "query_modality": protocol.query_modality,
        "gallery_modality": protocol.gallery_modality,
        "split": protocol.split,
        "num_trials": trials,
        "gallery_shots": protocol.gallery_shots,
        "gallery_camera_filter": list(protocol.gallery_camera_filter)
        if protocol.gallery_camera_filter is not None
        else None,
        "feature_view": protocol.feature_view,
        "num_queries": len(q_labels),
        "num_gallery": len(g_labels),
    }
    return EvalReport(
        cmc=np.mean(cmcs, axis=0),
        mean_ap=float(np.mean(maps)),
        per_query=per_query,
        protocol=protocol_echo,
    )


def _single_ap(order, q_label, gallery_labels):
    match = gallery_labels[np.asarray(order)] == q_label
    cum_correct = np.cumsum(match)
    precision = cum_correct / np.arange(1, len(match) + 1)
    return float(precision[match].mean())


def _subsample_gallery(gallery_labels, shots, rng):
    """Pick up to `shots` gallery entries per identity, preserving order."""
    keep = []
    for ident in np.unique(gallery_labels):
        pool = np.flatnonzero(gallery_labels == ident)
        if len(pool) <= shots:
            keep.extend(pool.tolist())
        else:
            picks = rng.choice(len(pool), size=shots, replace=False)
            keep.extend(pool[sorted(picks)].tolist())
    return np.asarray(sorted(keep))
