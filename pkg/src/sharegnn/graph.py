"""Synthetic road-distance metric and the two lot graphs.

The contextual graph links lots within a distance threshold (self-loops
kept).  The propagation graph relaxes the threshold per lot to reach its
k-th nearest sensor-equipped lot, excludes self-loops, and exposes the
labeled subset of each neighborhood as the aggregation set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np


@dataclass(frozen=True)
class ParkingLot:
    """One lot: dense id, position in km, spot count, sensor flag."""

    id: int
    x_km: float
    y_km: float
    capacity: int
    labeled: bool

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"lot {self.id}: capacity must be >= 1, got {self.capacity}")


class RoadNetwork:
    """Uniform lattice over a bounding box standing in for a road map.

    Lattice shortest-path length between two grid nodes equals their
    Manhattan distance times the spacing, so distances are computed in
    closed form.  Lots attach to their nearest node with a Euclidean offset.
    """

    def __init__(self, x0: float, y0: float, width_km: float, height_km: float,
                 spacing_km: float):
        if spacing_km <= 0:
            raise ValueError(f"grid spacing must be positive, got {spacing_km}")
        if width_km <= 0 or height_km <= 0:
            raise ValueError(f"degenerate bounding box {width_km} x {height_km}")
        self.x0 = float(x0)
        self.y0 = float(y0)
        self.spacing_km = float(spacing_km)
        self.nx = int(np.floor(width_km / spacing_km)) + 1
        self.ny = int(np.floor(height_km / spacing_km)) + 1

    def attach(self, x_km: float, y_km: float):
        """Nearest lattice node indices and the attachment offset in km."""
        ix = int(np.clip(np.rint((x_km - self.x0) / self.spacing_km), 0, self.nx - 1))
        iy = int(np.clip(np.rint((y_km - self.y0) / self.spacing_km), 0, self.ny - 1))
        nx_km = self.x0 + ix * self.spacing_km
        ny_km = self.y0 + iy * self.spacing_km
        offset = float(np.hypot(x_km - nx_km, y_km - ny_km))
        return ix, iy, offset


def road_distance(net: RoadNetwork, a: ParkingLot, b: ParkingLot) -> float:
    """Lattice shortest path between attachment nodes plus both offsets."""
    if a.id == b.id:
        return 0.0
    ax, ay, ao = net.attach(a.x_km, a.y_km)
    bx, by, bo = net.attach(b.x_km, b.y_km)
    return (abs(ax - bx) + abs(ay - by)) * net.spacing_km + ao + bo


def distance_matrix(net: RoadNetwork, lots: Sequence[ParkingLot]) -> np.ndarray:
    """Dense symmetric road-distance matrix with a zero diagonal."""
    n = len(lots)
    ix = np.empty(n)
    iy = np.empty(n)
    off = np.empty(n)
    for i, lot in enumerate(lots):
        ix[i], iy[i], off[i] = net.attach(lot.x_km, lot.y_km)
    d = (np.abs(ix[:, None] - ix[None, :]) + np.abs(iy[:, None] - iy[None, :]))
    d = d * net.spacing_km + off[:, None] + off[None, :]
    np.fill_diagonal(d, 0.0)
    return d


@dataclass
class CityGraph:
    """Derived graphs over a fixed lot set; immutable after construction."""

    lots: List[ParkingLot]
    net: RoadNetwork
    eps_km: float
    k_nn: int
    dist: np.ndarray = field(repr=False)
    ctx_mask: np.ndarray = field(repr=False)       # N x N binary, self-loops kept
    prop_mask: np.ndarray = field(repr=False)      # N x N binary, no self-loops
    prop_agg_mask: np.ndarray = field(repr=False)  # prop_mask restricted to labeled columns
    prop_radii: np.ndarray = field(repr=False)

    @property
    def n_lots(self) -> int:
        return len(self.lots)

    @property
    def labeled_flags(self) -> np.ndarray:
        return np.array([lot.labeled for lot in self.lots], dtype=bool)

    @property
    def labeled_ids(self) -> np.ndarray:
        return np.flatnonzero(self.labeled_flags)

    @property
    def unlabeled_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.labeled_flags)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([lot.capacity for lot in self.lots], dtype=np.float64)

    def context_neighbors(self, i: int) -> np.ndarray:
        """Neighbor ids of lot ``i`` in the contextual graph, sorted by id."""
        return np.flatnonzero(self.ctx_mask[i])

    def prop_neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.prop_mask[i])

    def prop_aggregation_set(self, i: int) -> np.ndarray:
        """Labeled lots that feed lot ``i``'s propagated availability."""
        return np.flatnonzero(self.prop_agg_mask[i])


def _check_lots(lots: Sequence[ParkingLot]) -> None:
    ids = [lot.id for lot in lots]
    if ids != list(range(len(lots))):
        raise ValueError("lot ids must be dense 0..N-1 in order")


def build_context_mask(dist: np.ndarray, eps_km: float) -> np.ndarray:
    """Binary adjacency: edge iff road distance <= eps; symmetric, self-loops."""
    if eps_km <= 0:
        raise ValueError(f"eps_km must be positive, got {eps_km}")
    return (dist <= eps_km).astype(np.float64)


def build_prop_masks(dist: np.ndarray, labeled: np.ndarray, eps_km: float, k_nn: int):
    """Relaxed-radius adjacency and its labeled aggregation subset.

    Per lot, the radius is max(eps, distance to its k-th nearest labeled lot,
    self excluded); when fewer than k labeled peers exist the farthest one
    defines the radius.  Returns (prop_mask, agg_mask, radii).
    """
    if k_nn < 1:
        raise ValueError(f"k_nn must be >= 1, got {k_nn}")
    labeled = np.asarray(labeled, dtype=bool)
    if not labeled.any():
        raise ValueError("no labeled lots; propagation undefined")
    n = dist.shape[0]
    radii = np.empty(n)
    for i in range(n):
        peers = np.flatnonzero(labeled)
        peers = peers[peers != i]
        if peers.size == 0:
            radii[i] = eps_km
            continue
        kth = min(k_nn, peers.size)
        d = np.sort(dist[i, peers])
        radii[i] = max(eps_km, d[kth - 1])
    prop = (dist <= radii[:, None]).astype(np.float64)
    np.fill_diagonal(prop, 0.0)
    agg = prop * labeled[None, :].astype(np.float64)
    return prop, agg, radii


def build_city_graph(lots: Sequence[ParkingLot], net: RoadNetwork,
                     eps_km: float = 1.0, k_nn: int = 10) -> CityGraph:
    """Distance matrix plus both derived graphs for a lot set."""
    _check_lots(lots)
    dist = distance_matrix(net, lots)
    ctx = build_context_mask(dist, eps_km)
    labeled = np.array([lot.labeled for lot in lots], dtype=bool)
    prop, agg, radii = build_prop_masks(dist, labeled, eps_km, k_nn)
    return CityGraph(
        lots=list(lots),
        net=net,
        eps_km=eps_km,
        k_nn=k_nn,
        dist=dist,
        ctx_mask=ctx,
        prop_mask=prop,
        prop_agg_mask=agg,
        prop_radii=radii,
    )
