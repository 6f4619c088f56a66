"""Pixel-wise majority-vote fusion of prediction masks.

Each non-ignore member casts its weight as a vote for its label; the label
with maximal vote mass wins. Ties go to the earliest member (in config
order) whose label is among the tied maximizers, so output is a pure
function of the inputs and the configured member order. A pixel is ignore
only when every member abstains (votes ignore).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import SegbenchError
from .masks import IGNORE_LABEL, LabelMask


@dataclass(frozen=True)
class EnsembleConfig:
    """Members in tie-break priority order, with optional positive weights."""

    member_names: tuple[str, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        names = tuple(self.member_names)
        if len(names) < 2:
            raise SegbenchError("ensemble requires at least 2 members")
        if len(set(names)) != len(names):
            raise SegbenchError("ensemble member names must be unique")
        object.__setattr__(self, "member_names", names)
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(names):
                raise SegbenchError("weights must match member_names in length")
            if any(x <= 0.0 for x in w):
                raise SegbenchError("weights must be strictly positive")
            object.__setattr__(self, "weights", w)

    def effective_weights(self) -> tuple[float, ...]:
        if self.weights is None:
            return tuple(1.0 for _ in self.member_names)
        return self.weights

    def to_dict(self) -> dict:
        out: dict = {"member_names": list(self.member_names)}
        if self.weights is not None:
            out["weights"] = list(self.weights)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "EnsembleConfig":
        return cls(
            member_names=tuple(payload["member_names"]),
            weights=tuple(payload["weights"]) if payload.get("weights") else None,
        )


def _check_members(masks: list[LabelMask], config: EnsembleConfig) -> None:
    if len(masks) < 2:
        raise SegbenchError("majority vote requires at least 2 masks")
    if len(masks) != len(config.member_names):
        raise SegbenchError(
            f"got {len(masks)} masks for {len(config.member_names)} configured members"
        )
    first = masks[0]
    for m in masks[1:]:
        if m.labels.shape != first.labels.shape:
            raise SegbenchError("all member masks must share width and height")
        if m.num_classes != first.num_classes:
            raise SegbenchError("all member masks must share num_classes")


def _vote_mass(masks: list[LabelMask], weights: tuple[float, ...]) -> np.ndarray:
    """(K, H, W) stack of per-label vote mass; ignore votes are abstentions."""
    k = masks[0].num_classes
    h, w = masks[0].labels.shape
    votes = np.zeros((k, h, w), dtype=np.float64)
    for mask, weight in zip(masks, weights):
        lbl = mask.labels
        rows, cols = np.nonzero(lbl != IGNORE_LABEL)
        np.add.at(votes, (lbl[rows, cols].astype(np.intp), rows, cols), weight)
    return votes


def majority_vote(masks: list[LabelMask], config: EnsembleConfig) -> LabelMask:
    """Fuse member masks by weighted plurality with priority tie-breaking."""
    _check_members(masks, config)
    weights = config.effective_weights()
    votes = _vote_mass(masks, weights)
    max_votes = votes.max(axis=0)

    k = masks[0].num_classes
    result = np.full(masks[0].labels.shape, IGNORE_LABEL, dtype=np.uint8)
    assigned = np.zeros(masks[0].labels.shape, dtype=bool)
    for mask in masks:
        lbl = mask.labels
        live = lbl != IGNORE_LABEL
        idx = np.where(live, lbl, 0).astype(np.intp)
        member_votes = np.take_along_axis(votes, idx[np.newaxis], axis=0)[0]
        wins = ~assigned & live & (member_votes == max_votes)
        result[wins] = lbl[wins]
        assigned |= wins
    return LabelMask(labels=result, num_classes=k)


def vote_margin(masks: list[LabelMask], config: EnsembleConfig) -> np.ndarray:
    """Winner vote mass minus runner-up vote mass, per pixel (>= 0).

    Equals the total weight where members are unanimous; 0 on full ties
    and on all-abstain pixels.
    """
    _check_members(masks, config)
    votes = _vote_mass(masks, config.effective_weights())
    if votes.shape[0] == 1:
        return votes[0].copy()
    top2 = np.sort(votes, axis=0)[-2:]
    return top2[1] - top2[0]
