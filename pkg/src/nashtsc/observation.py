"""Per-intersection observations and epoch rewards.

An agent sees the ``R`` cells nearest the stop line on each of its four
incoming approaches, stacked in (N, S, E, W) order with the stop cell first.
"""
from __future__ import annotations

import numpy as np

from .sim import CYCLE, RoadNetwork


def encode_observation(network: RoadNetwork, intersection: int, R: int) -> np.ndarray:
    if not 1 <= R <= network.lane_cells:
        raise ValueError(f"R must be in 1..{network.lane_cells}, got {R}")
    L = network.lane_cells
    occ = (network.cell_vehicle >= 0).reshape(-1, L)
    return occ[network.approach_lanes[intersection], :R].astype(np.float64).ravel()


def encode_all(network: RoadNetwork, R: int) -> np.ndarray:
    """Observations for every intersection, shape (n_intersections, 4 * R)."""
    L = network.lane_cells
    occ = (network.cell_vehicle >= 0).reshape(-1, L)
    return occ[network.approach_lanes, :R].astype(np.float64).reshape(len(network.intersections), -1)


def epoch_reward(w_prev, w_curr):
    """Reward for an epoch: how much the waiting accrual dropped since the previous one."""
    return w_prev - w_curr


def observed_region(network: RoadNetwork, R: int) -> np.ndarray:
    """Owner intersection of every cell, or -1 for cells nobody observes."""
    L = network.lane_cells
    owner = np.full((len(network.lanes), L), -1, dtype=np.int64)
    for inter in network.intersections:
        for lane in inter.incoming_lanes.values():
            owner[lane, :R] = inter.index
    return owner.ravel()


class WaitingMeter:
    """Accumulates per-intersection waiting seconds inside the observed regions.

    Call :meth:`record` after every ``sim_step``; :meth:`take` returns the
    accrual since the previous call (one epoch) and restarts the count.
    """

    def __init__(self, network: RoadNetwork, R: int):
        self.owner = observed_region(network, R)
        self.n = len(network.intersections)
        self.current = np.zeros(self.n, dtype=np.int64)

    def record(self, network: RoadNetwork):
        stopped_owner = self.owner[network.stopped]
        stopped_owner = stopped_owner[stopped_owner >= 0]
        if len(stopped_owner):
            self.current += np.bincount(stopped_owner, minlength=self.n)

    def take(self) -> np.ndarray:
        w, self.current = self.current, np.zeros(self.n, dtype=np.int64)
        return w


def accrue_epoch_waiting(network: RoadNetwork, intersection: int, R: int, seconds: int = CYCLE) -> int:
    """Run the network for one epoch and return the intersection's waiting accrual."""
    meter = WaitingMeter(network, R)
    for _ in range(seconds):
        network.step()
        meter.record(network)
    return int(meter.take()[intersection])
