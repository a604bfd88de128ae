"""User-item interaction graph and its symmetric-normalized adjacency operator."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DataError


@dataclass
class InteractionGraph:
    """Bipartite implicit-feedback graph over ``num_users`` users and ``num_items`` items.

    Edges are binary (an interaction either exists or it does not) and
    deduplicated. ``user_neighbors[u]`` holds the sorted item indices of user
    ``u``; ``item_neighbors[i]`` the sorted user indices of item ``i``. Both
    views describe the same edge set. Instances are treated as immutable
    after construction.
    """

    num_users: int
    num_items: int
    edges: np.ndarray  # (E, 2) int64, unique rows, sorted by (user, item)
    user_neighbors: list[np.ndarray]
    item_neighbors: list[np.ndarray]

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def user_degrees(self) -> np.ndarray:
        return np.bincount(self.edges[:, 0], minlength=self.num_users).astype(np.int64)

    @cached_property
    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.edges[:, 1], minlength=self.num_items).astype(np.int64)

    @cached_property
    def user_item_sets(self) -> list[set[int]]:
        """Per-user positive-item sets, used by negative sampling."""
        return [set(a.tolist()) for a in self.user_neighbors]


@dataclass
class NormalizedAdjacency:
    """Sparse symmetric-normalized operator over the (M+N)-node bipartite graph.

    Nodes 0..M-1 are users, M..M+N-1 are items. The entry for edge (u, i) is
    1/sqrt(deg(u) * deg(i)), stored in both directions so the operator is
    exactly symmetric. The diagonal is empty: propagation does not pass a
    node's own features. Zero-degree nodes contribute no entries.
    """

    num_users: int
    num_items: int
    matrix: sp.csr_matrix  # (M+N, M+N)
    degrees: np.ndarray  # (M+N,) int64, users then items

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @cached_property
    def active_nodes(self) -> np.ndarray:
        """Boolean mask of nodes with at least one edge."""
        return self.degrees > 0


def _group_sorted(keys: np.ndarray, values: np.ndarray, num_groups: int) -> list[np.ndarray]:
    # keys must be sorted ascending; values sorted within each key group.
    counts = np.bincount(keys, minlength=num_groups)
    return np.split(values, np.cumsum(counts)[:-1])


def build_graph(records, num_users: int, num_items: int) -> InteractionGraph:
    """Build a deduplicated interaction graph from (user, item) index pairs.

    Indices must already be remapped to the contiguous ranges [0, num_users)
    and [0, num_items); out-of-range indices are rejected.
    """
    if num_users <= 0 or num_items <= 0:
        raise DataError("graph requires positive user and item counts")
    arr = np.asarray(list(records), dtype=np.int64).reshape(-1, 2)
    if arr.size:
        if arr[:, 0].min() < 0 or arr[:, 0].max() >= num_users:
            raise DataError(
                f"user index out of range [0, {num_users}): "
                f"min={arr[:, 0].min()} max={arr[:, 0].max()}"
            )
        if arr[:, 1].min() < 0 or arr[:, 1].max() >= num_items:
            raise DataError(
                f"item index out of range [0, {num_items}): "
                f"min={arr[:, 1].min()} max={arr[:, 1].max()}"
            )
    edges = np.unique(arr, axis=0) if arr.size else arr.reshape(0, 2)

    user_neighbors = _group_sorted(edges[:, 0], edges[:, 1].copy(), num_users)
    by_item = edges[np.lexsort((edges[:, 0], edges[:, 1]))]
    item_neighbors = _group_sorted(by_item[:, 1], by_item[:, 0].copy(), num_items)

    return InteractionGraph(
        num_users=num_users,
        num_items=num_items,
        edges=edges,
        user_neighbors=user_neighbors,
        item_neighbors=item_neighbors,
    )


def normalize_adjacency(g: InteractionGraph) -> NormalizedAdjacency:
    """Symmetric-normalized adjacency: weight(u, i) = 1/sqrt(deg(u) * deg(i)).

    The returned operator has no diagonal entries and is exactly symmetric
    (each edge weight is computed once and stored in both triangles). An
    empty graph yields an empty operator.
    """
    m, n = g.num_users, g.num_items
    u = g.edges[:, 0]
    i = g.edges[:, 1]
    weights = 1.0 / np.sqrt(g.user_degrees[u].astype(np.float64) * g.item_degrees[i])

    rows = np.concatenate([u, m + i])
    cols = np.concatenate([m + i, u])
    data = np.concatenate([weights, weights])
    matrix = sp.coo_matrix((data, (rows, cols)), shape=(m + n, m + n)).tocsr()

    degrees = np.concatenate([g.user_degrees, g.item_degrees])
    return NormalizedAdjacency(num_users=m, num_items=n, matrix=matrix, degrees=degrees)
