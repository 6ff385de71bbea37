"""Top-push ranking losses for two-modality embedding batches.

Three hinge terms over Euclidean embedding distances, each mined per anchor
and applied symmetrically in both modality directions:

* cross: hardest cross-modality positive pushed below the closest
  cross-modality negative.
* intra: hardest same-modality positive vs closest same-modality negative;
  with one image per identity and modality the positive set is empty and
  the term vanishes.
* inter: hardest cross-modality positive vs closest same-modality negative,
  tying the two distance scales together.

All three are sums over anchors (a mean reduction is available for scale
stability with large batches). A non-mined reference loss that averages
over every admissible triplet is provided for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch
import torch.nn.functional as F

VARIANTS = ("hard", "all_triplets", "soft_margin", "weighted")
RANKING_TERMS = ("cross", "intra", "inter")


@dataclass
class MarginConfig:
    """Margins, tradeoffs, and the mining variant of the ranking objective."""

    cross_margin: float = 0.5
    intra_margin: float = 0.1
    inter_margin: float = 0.3
    intra_weight: float = 0.1
    inter_weight: float = 0.5
    variant: str = "hard"
    reduction: str = "sum"

    def __post_init__(self):
        if min(self.cross_margin, self.intra_margin, self.inter_margin) < 0:
            raise ValueError("margins must be nonnegative")
        if min(self.intra_weight, self.inter_weight) < 0:
            raise ValueError("tradeoff weights must be nonnegative")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.reduction not in ("sum", "mean"):
            raise ValueError("reduction must be 'sum' or 'mean'")

    def with_wide_inter_margin(self):
        """Alternative preset with the empirically strongest inter margin."""
        return replace(self, inter_margin=0.9)


def _as_tensor(x):
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x)


def pairwise_distances(set_a, set_b):
    """Euclidean distance matrix between two embedding sets, shape (A, B).

    Zero entries (an embedding against itself) stay exactly zero; their
    gradient is cut instead of propagating the infinite sqrt slope.
    """
    set_a = _as_tensor(set_a)
    set_b = _as_tensor(set_b)
    if set_a.shape[-1] != set_b.shape[-1]:
        raise ValueError(
            f"embedding dims differ: {set_a.shape[-1]} vs {set_b.shape[-1]}"
        )
    diff = set_a.unsqueeze(1) - set_b.unsqueeze(0)
    squared = (diff * diff).sum(-1)
    zero = squared == 0
    return torch.sqrt(squared.masked_fill(zero, 1.0)).masked_fill(zero, 0.0)


def _check_candidates(mask, labels, what):
    missing = ~mask.any(dim=1)
    if missing.any():
        label = labels[missing.nonzero()[0, 0]].item()
        raise ValueError(f"anchor with label {label} has no {what} in the batch")


def _mined_terms(pos_dist, pos_mask, neg_dist, neg_mask, margin, variant):
    """Per-anchor loss terms given candidate positive/negative distances.

    Mining is exact: the true max over positives and min over negatives.
    Anchors whose positive set is empty contribute zero. Subgradients at
    ties follow the first attaining element (argmax/argmin convention).
    """
    neg_inf = torch.tensor(float("-inf"), dtype=pos_dist.dtype, device=pos_dist.device)
    pos_inf = torch.tensor(float("inf"), dtype=pos_dist.dtype, device=pos_dist.device)
    has_pos = pos_mask.any(dim=1)

    if variant == "all_triplets":
        # hinge over every (positive, negative) pair per anchor
        gaps = margin + pos_dist.unsqueeze(2) - neg_dist.unsqueeze(1)  # (A, P, N)
        valid = pos_mask.unsqueeze(2) & neg_mask.unsqueeze(1)
        return torch.where(valid, gaps.clamp(min=0), torch.zeros_like(gaps)).sum(dim=(1, 2))

    if variant == "weighted":
        # softmax-weighted positive/negative distances, margin-free softplus
        pos_w = torch.softmax(torch.where(pos_mask, pos_dist, neg_inf), dim=1)
        neg_w = torch.softmax(torch.where(neg_mask, -neg_dist, neg_inf), dim=1)
        pos_d = (pos_w * torch.where(pos_mask, pos_dist, torch.zeros_like(pos_dist))).sum(dim=1)
        neg_d = (neg_w * torch.where(neg_mask, neg_dist, torch.zeros_like(neg_dist))).sum(dim=1)
        terms = F.softplus(pos_d - neg_d)
        return torch.where(has_pos, terms, torch.zeros_like(terms))

    hardest_pos = torch.where(pos_mask, pos_dist, neg_inf).max(dim=1).values
    closest_neg = torch.where(neg_mask, neg_dist, pos_inf).min(dim=1).values
    if variant == "soft_margin":
        terms = F.softplus(hardest_pos - closest_neg)
    else:  # hard
        terms = (margin + hardest_pos - closest_neg).clamp(min=0)
    return torch.where(has_pos, terms, torch.zeros_like(terms))


def _reduce(terms, reduction):
    return terms.mean() if reduction == "mean" else terms.sum()


def cross_modality_loss(
    gray, gray_labels, infrared, ir_labels, margin, variant="hard", reduction="sum"
):
    """Top-push hinge with cross-modality positives and negatives, both
    anchor directions. Every anchor must have a cross-modality positive and
    negative in the batch."""
    gray, infrared = _as_tensor(gray), _as_tensor(infrared)
    gray_labels, ir_labels = _as_tensor(gray_labels), _as_tensor(ir_labels)
    terms = []
    for anchors, a_labels, others, o_labels in (
        (gray, gray_labels, infrared, ir_labels),
        (infrared, ir_labels, gray, gray_labels),
    ):
        dist = pairwise_distances(anchors, others)
        pos = a_labels.unsqueeze(1) == o_labels.unsqueeze(0)
        neg = ~pos
        _check_candidates(pos, a_labels, "cross-modality positive")
        _check_candidates(neg, a_labels, "cross-modality negative")
        terms.append(_mined_terms(dist, pos, dist, neg, margin, variant))
    return _reduce(torch.cat(terms), reduction)


def intra_modality_loss(
    gray, gray_labels, infrared, ir_labels, margin, variant="hard", reduction="sum"
):
    """Top-push hinge within each modality. The anchor itself is excluded
    from its positive set; anchors without a same-modality positive (one
    image per identity) contribute zero."""
    terms = []
    for emb, labels in ((gray, gray_labels), (infrared, ir_labels)):
        emb, labels = _as_tensor(emb), _as_tensor(labels)
        dist = pairwise_distances(emb, emb)
        same = labels.unsqueeze(1) == labels.unsqueeze(0)
        eye = torch.eye(len(labels), dtype=torch.bool, device=same.device)
        pos = same & ~eye
        neg = ~same
        _check_candidates(neg, labels, "same-modality negative")
        terms.append(_mined_terms(dist, pos, dist, neg, margin, variant))
    return _reduce(torch.cat(terms), reduction)


def inter_modality_loss(
    gray, gray_labels, infrared, ir_labels, margin, variant="hard", reduction="sum"
):
    """Top-push hinge pairing the farthest cross-modality positive with the
    closest same-modality negative, both anchor directions."""
    gray, infrared = _as_tensor(gray), _as_tensor(infrared)
    gray_labels, ir_labels = _as_tensor(gray_labels), _as_tensor(ir_labels)
    terms = []
    for anchors, a_labels, others, o_labels in (
        (gray, gray_labels, infrared, ir_labels),
        (infrared, ir_labels, gray, gray_labels),
    ):
        cross = pairwise_distances(anchors, others)
        within = pairwise_distances(anchors, anchors)
        pos = a_labels.unsqueeze(1) == o_labels.unsqueeze(0)
        same = a_labels.unsqueeze(1) == a_labels.unsqueeze(0)
        neg = ~same
        _check_candidates(pos, a_labels, "cross-modality positive")
        _check_candidates(neg, a_labels, "same-modality negative")
        terms.append(_mined_terms(cross, pos, within, neg, margin, variant))
    return _reduce(torch.cat(terms), reduction)


def bidirectional_ranking_loss(visible, vis_labels, infrared, ir_labels, margin):
    """Non-mined bi-directional ranking loss averaged by anchor count (the
    classic dual-constrained top-ranking baseline).

    Sums the hinge over every (anchor, positive, negative) combination with
    cross-modality positives and negatives, in both directions, and divides
    each direction by its number of anchors.
    """
    visible, infrared = _as_tensor(visible), _as_tensor(infrared)
    vis_labels, ir_labels = _as_tensor(vis_labels), _as_tensor(ir_labels)
    total = visible.new_zeros(())
    for anchors, a_labels, others, o_labels in (
        (visible, vis_labels, infrared, ir_labels),
        (infrared, ir_labels, visible, vis_labels),
    ):
        dist = pairwise_distances(anchors, others)
        pos = a_labels.unsqueeze(1) == o_labels.unsqueeze(0)
        neg = ~pos
        _check_candidates(pos, a_labels, "cross-modality positive")
        _check_candidates(neg, a_labels, "cross-modality negative")
        gaps = margin + dist.unsqueeze(2) - dist.unsqueeze(1)  # (A, P, N)
        valid = pos.unsqueeze(2) & neg.unsqueeze(1)
        total = total + torch.where(
            valid, gaps.clamp(min=0), torch.zeros_like(gaps)
        ).sum() / len(anchors)
    return total


def ranking_objective(
    gray, gray_labels, infrared, ir_labels, config, include=RANKING_TERMS
):
    """Weighted combination of the enabled ranking terms.

    Returns (combined, parts dict); disabled terms appear as zeros so loss
    logs stay uniform across ablation settings.
    """
    gray = _as_tensor(gray)
    fns = {
        "cross": (cross_modality_loss, config.cross_margin, 1.0),
        "intra": (intra_modality_loss, config.intra_margin, config.intra_weight),
        "inter": (inter_modality_loss, config.inter_margin, config.inter_weight),
    }
    combined = gray.new_zeros(())
    parts = {}
    for name, (fn, margin, weight) in fns.items():
        if name in include and weight > 0:
            parts[name] = fn(
                gray, gray_labels, infrared, ir_labels,
                margin, config.variant, config.reduction,
            )
            combined = combined + weight * parts[name]
        else:
            parts[name] = gray.new_zeros(())
    return combined, parts


def total_loss(identity, cross, intra, inter, intra_weight, inter_weight):
    """Overall objective: identity + cross + weighted intra and inter terms."""
    return identity + cross + intra_weight * intra + inter_weight * inter
