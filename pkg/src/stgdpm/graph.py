"""Dynamic interaction graphs over vessels.

Per observed time step, vessels closer than the interaction boundary ``tau``
(hectometers) are linked with weight 1/distance; the stack of weighted
adjacency matrices is then symmetrically normalized into the Laplacian form
I - D^{-1/2} A D^{-1/2} used by the graph convolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TAU = 50.0


@dataclass
class DynamicAdjacency:
    """Weighted adjacency stack A of shape (T_obs, V, V); ``tau`` in hm."""

    a: np.ndarray
    tau: float | None


@dataclass
class NormalizedAdjacency:
    """Normalized stack of shape (T_obs, V, V), one Laplacian per step."""

    a_hat: np.ndarray


def edge_weight(p_i, p_j, tau=DEFAULT_TAU):
    """Reciprocal-distance kernel: 1/d for 0 < d < tau, else 0.

    Both inequalities are strict; coincident vessels get weight 0 and the
    boundary distance itself is excluded. ``tau=None`` disables the
    threshold (any d > 0 links).
    """
    d = float(np.hypot(p_i[0] - p_j[0], p_i[1] - p_j[1]))
    if d <= 0.0:
        return 0.0
    if tau is not None and d >= tau:
        return 0.0
    return 1.0 / d


def build_adjacency(scene, tau=DEFAULT_TAU):
    """Build the per-step weighted adjacency stack for a scene's observed window."""
    x = scene.x  # (2, V, T_obs)
    v = x.shape[1]
    t_obs = x.shape[2]
    diff = x[:, :, None, :] - x[:, None, :, :]  # (2, V, V, T)
    dist = np.sqrt((diff**2).sum(axis=0))  # (V, V, T)
    with np.errstate(divide="ignore"):
        w = np.where(dist > 0.0, 1.0 / np.where(dist > 0.0, dist, 1.0), 0.0)
    if tau is not None:
        w = np.where(dist < tau, w, 0.0)
    a = np.transpose(w, (2, 0, 1)).copy()  # (T, V, V)
    a[:, np.arange(v), np.arange(v)] = 0.0
    return DynamicAdjacency(a=a, tau=tau)


def normalize_adjacency(adj):
    """Per-step symmetric normalization A_hat = I - D^{-1/2} A D^{-1/2}.

    D is the diagonal of row sums; isolated nodes (zero degree) use the
    convention D^{-1/2} = 0, which leaves A_hat = I on those rows so an
    isolated vessel aggregates only its own features.
    """
    a = adj.a
    t_obs, v, _ = a.shape
    deg = a.sum(axis=2)  # (T, V)
    with np.errstate(divide="ignore"):
        d_inv_sqrt = np.where(deg > 0.0, 1.0 / np.sqrt(np.where(deg > 0.0, deg, 1.0)), 0.0)
    norm = d_inv_sqrt[:, :, None] * a * d_inv_sqrt[:, None, :]
    a_hat = np.eye(v)[None, :, :] - norm
    return NormalizedAdjacency(a_hat=a_hat)
