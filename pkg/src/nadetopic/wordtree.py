"""Balanced binary tree over the joint vocabulary.

A span of ``n`` leaves is split into a left part of ``ceil(n/2)`` leaves and
a right part of ``floor(n/2)``. Internal nodes are numbered in pre-order
(root = 0), and joint words are placed on the leaves by a seeded uniform
permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nadetopic.errors import BoundsError, ValidationError


@dataclass(frozen=True, eq=False)
class WordTree:
    """Tree layout plus per-word node and direction paths.

    ``perm[p]`` is the joint word stored at leaf position ``p``.
    ``children[t] = (left, right)`` with non-negative entries naming internal
    nodes and negative entries ``~p`` naming leaf position ``p``.
    ``nodes``, ``bits`` are ``J x depth`` arrays padded past ``lengths[v]``
    (node 0, bit 0) so that whole documents can be gathered at once.
    """

    J: int
    seed: int
    perm: np.ndarray
    children: np.ndarray
    nodes: np.ndarray
    bits: np.ndarray
    lengths: np.ndarray
    mask: np.ndarray = field(repr=False)

    @property
    def T(self) -> int:
        return self.J - 1

    @property
    def depth(self) -> int:
        return self.nodes.shape[1]

    def path(self, v: int) -> tuple[list[int], list[int]]:
        """Node path l(v) (root first) and bit path pi(v) (0 = left)."""
        if not 0 <= v < self.J:
            raise BoundsError(f"joint index {v} outside [0, {self.J})")
        n = int(self.lengths[v])
        return ([int(t) for t in self.nodes[v, :n]],
                [int(b) for b in self.bits[v, :n]])


def _layout(J: int):
    """Pre-order construction; returns children and per-leaf-position paths."""
    children = np.zeros((J - 1, 2), dtype=np.int64)
    leaf_paths: list[tuple[list[int], list[int]]] = [None] * J
    counter = [0]

    def build(lo: int, n: int, nodes: list[int], bits: list[int]) -> int:
        if n == 1:
            leaf_paths[lo] = (nodes, bits)
            return ~lo
        t = counter[0]
        counter[0] += 1
        n_left = (n + 1) // 2
        children[t, 0] = build(lo, n_left, nodes + [t], bits + [0])
        children[t, 1] = build(lo + n_left, n - n_left, nodes + [t], bits + [1])
        return t

    build(0, J, [], [])
    return children, leaf_paths


def tree_from_permutation(J: int, seed: int, perm) -> WordTree:
    """Rebuild a tree from an explicit leaf permutation (used by checkpoints)."""
    perm = np.asarray(perm, dtype=np.int64)
    if J < 2:
        raise ValidationError(f"a word tree needs J >= 2 leaves, got {J}")
    if perm.shape != (J,) or not np.array_equal(np.sort(perm), np.arange(J)):
        raise ValidationError("leaf permutation is not a permutation of [0, J)")
    children, leaf_paths = _layout(J)
    depth = max(len(p[0]) for p in leaf_paths)
    nodes = np.zeros((J, depth), dtype=np.int64)
    bits = np.zeros((J, depth), dtype=np.int64)
    lengths = np.zeros(J, dtype=np.int64)
    for pos, (nd, bt) in enumerate(leaf_paths):
        v = perm[pos]
        nodes[v, :len(nd)] = nd
        bits[v, :len(bt)] = bt
        lengths[v] = len(nd)
    mask = np.arange(depth)[None, :] < lengths[:, None]
    for arr in (perm, children, nodes, bits, lengths, mask):
        arr.setflags(write=False)
    return WordTree(J=J, seed=int(seed), perm=perm, children=children,
                    nodes=nodes, bits=bits, lengths=lengths, mask=mask)


def build_balanced(J: int, seed: int) -> WordTree:
    if J < 2:
        raise ValidationError(f"a word tree needs J >= 2 leaves, got {J}")
    perm = np.random.default_rng(seed).permutation(J)
    return tree_from_permutation(J, seed, perm)
