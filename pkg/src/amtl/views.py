"""Orthogonal image views: the pixel permutations anagram tasks are defined over.

Every view is a bijective permutation of pixel coordinates on a square grid,
so applying one preserves the multiset of tensor values (and thus every
element-wise statistic, including the L2 norm). The six primary anagram
views are the identity, the two axis flips and the three quarter-turn
rotations; the two diagonal reflections (transpose and anti-transpose) are
included as well because the primary six do not close under composition
without them (a quarter turn followed by an axis flip is a diagonal flip).
Together the eight form the full symmetry group of the square. General
warps are deliberately unsupported.
"""

from __future__ import annotations

import enum
import functools

import torch

__all__ = ["ViewTransform", "ANAGRAM_VIEWS", "apply", "invert", "compose",
           "apply_to_grid", "view_from_name"]


class ViewTransform(enum.Enum):
    """One of the eight orthogonal pixel permutations of the square."""

    IDENTITY = "identity"
    FLIP_VERTICAL = "flip_v"      # reverse rows (upside down)
    FLIP_HORIZONTAL = "flip_h"    # reverse columns (mirror)
    ROT90_CW = "rot90cw"
    ROT90_CCW = "rot90ccw"
    ROT180 = "rot180"
    TRANSPOSE = "transpose"           # reflect about the main diagonal
    ANTI_TRANSPOSE = "anti_transpose"  # reflect about the anti-diagonal

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"ViewTransform.{self.name}"


# The documented anagram view set used by configs and the CLI by default.
ANAGRAM_VIEWS = (
    ViewTransform.IDENTITY,
    ViewTransform.FLIP_VERTICAL,
    ViewTransform.FLIP_HORIZONTAL,
    ViewTransform.ROT90_CW,
    ViewTransform.ROT90_CCW,
    ViewTransform.ROT180,
)

_NEEDS_SQUARE = {
    ViewTransform.ROT90_CW,
    ViewTransform.ROT90_CCW,
    ViewTransform.ROT180,
    ViewTransform.TRANSPOSE,
    ViewTransform.ANTI_TRANSPOSE,
}


def view_from_name(name: str) -> ViewTransform:
    """Parse a serialized view name ("identity", "flip_v", ...)."""
    try:
        return ViewTransform(name)
    except ValueError:
        valid = ", ".join(v.value for v in ViewTransform)
        raise ValueError(f"unknown view {name!r}; expected one of: {valid}") from None


def _check_spatial(v: ViewTransform, x: torch.Tensor, dims: tuple) -> None:
    if x.dim() < 2:
        raise ValueError(f"views act on >=2-d tensors, got shape {tuple(x.shape)}")
    h, w = x.shape[dims[0]], x.shape[dims[1]]
    if v in _NEEDS_SQUARE and h != w:
        raise ValueError(f"view {v.value} requires a square grid, got {h}x{w}")


def _permute(v: ViewTransform, x: torch.Tensor, dims: tuple) -> torch.Tensor:
    if v is ViewTransform.IDENTITY:
        return x
    if v is ViewTransform.FLIP_VERTICAL:
        return torch.flip(x, (dims[0],))
    if v is ViewTransform.FLIP_HORIZONTAL:
        return torch.flip(x, (dims[1],))
    if v is ViewTransform.ROT90_CW:
        return torch.rot90(x, -1, dims)
    if v is ViewTransform.ROT90_CCW:
        return torch.rot90(x, 1, dims)
    if v is ViewTransform.ROT180:
        return torch.rot90(x, 2, dims)
    if v is ViewTransform.TRANSPOSE:
        return x.transpose(dims[0], dims[1])
    return torch.flip(x.transpose(dims[0], dims[1]), dims)


def apply(v: ViewTransform, x: torch.Tensor) -> torch.Tensor:
    """Apply view ``v`` to an image-like tensor, permuting the last two axes.

    Accepts any tensor whose trailing two dimensions are spatial, e.g.
    (H, W), (C, H, W) or (B, C, H, W). Differentiable.
    """
    _check_spatial(v, x, (-2, -1))
    return _permute(v, x, (-2, -1))


def apply_to_grid(v: ViewTransform, a: torch.Tensor) -> torch.Tensor:
    """Apply view ``v`` to an attention grid shaped (r, r, K).

    Same pixel permutation as :func:`apply`, acting on the two leading
    spatial axes; the trailing token axis is untouched. Legal because every
    supported view maps an r x r grid onto itself.
    """
    _check_spatial(v, a, (0, 1))
    return _permute(v, a, (0, 1))


@functools.lru_cache(maxsize=None)
def _signature(v: ViewTransform) -> tuple:
    # A 2x2 grid of distinct values separates all eight members.
    marker = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
    return tuple(apply(v, marker).flatten().tolist())


@functools.lru_cache(maxsize=None)
def compose(a: ViewTransform, b: ViewTransform) -> ViewTransform:
    """The view equivalent to applying ``b`` first and then ``a``.

    Satisfies apply(compose(a, b), x) == apply(a, apply(b, x)); the group is
    closed, so the result is always a member.
    """
    marker = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
    target = tuple(apply(a, apply(b, marker)).flatten().tolist())
    for m in ViewTransform:
        if _signature(m) == target:
            return m
    raise AssertionError("view group is not closed; unreachable")


@functools.lru_cache(maxsize=None)
def invert(v: ViewTransform) -> ViewTransform:
    """The group inverse: apply(invert(v), apply(v, x)) == x exactly."""
    for m in ViewTransform:
        if compose(m, v) is ViewTransform.IDENTITY:
            return m
    raise AssertionError("every view has an inverse; unreachable")
