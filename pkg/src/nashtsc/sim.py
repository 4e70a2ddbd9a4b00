"""Cell-based traffic simulator for a signalized grid.

Every lane is a chain of vehicle-length cells.  Vehicles move at most one
cell per second and only into a cell that was empty at the start of the
second, so a standing queue dissolves one vehicle per second (start-up lag).
Routes are straight: a vehicle keeps its entrance direction until it leaves
the grid on the opposite side.

Cell indexing inside a lane is downstream-first: cell 0 is the stop cell in
front of the intersection, cell ``L - 1`` is where vehicles enter the lane.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

CYCLE = 40
GREEN_CHOICES = (10, 15, 20, 25, 30)
APPROACHES = ("N", "S", "E", "W")
NS_GREEN = "NS_green"
EW_GREEN = "EW_green"


class ConfigurationError(ValueError):
    """Raised for network or demand settings that cannot be built."""


@dataclass
class SignalPhasePlan:
    ns_green: int = 20
    cycle_offset: int = 0
    # duration chosen mid-cycle; latched at the next cycle start
    pending: int | None = None

    @property
    def ew_green(self) -> int:
        return CYCLE - self.ns_green

    def __post_init__(self):
        if self.ns_green not in GREEN_CHOICES:
            raise ValueError(f"ns_green must be one of {GREEN_CHOICES}, got {self.ns_green}")


@dataclass
class Lane:
    id: int
    # travel direction given as the side the traffic comes from
    origin: str
    corridor: int
    segment: int
    to_intersection: int | None
    from_intersection: int | None
    next_lane: int | None = None

    @property
    def is_exit(self) -> bool:
        return self.to_intersection is None


@dataclass
class Intersection:
    index: int
    id: tuple[int, int]
    phase_plan: SignalPhasePlan = field(default_factory=SignalPhasePlan)
    # approach -> lane id, approach named by the side traffic comes from
    incoming_lanes: dict[str, int] = field(default_factory=dict)
    # slot (N, S, E, W) -> neighbor intersection index, None at the boundary
    neighbor_slots: dict[str, int | None] = field(default_factory=dict)

    @property
    def neighbor_ids(self) -> list[int]:
        return [n for n in self.neighbor_slots.values() if n is not None]


@dataclass(frozen=True)
class Entrance:
    direction: str
    index: int
    ivn: int
    tfr: Fraction

    def __post_init__(self):
        if self.direction not in APPROACHES:
            raise ConfigurationError(f"entrance direction must be one of N/S/E/W, got {self.direction!r}")
        if self.ivn <= 0:
            raise ConfigurationError(f"entrance {self.name}: ivn must be positive")
        tfr = Fraction(self.tfr)
        if tfr.numerator != 1 or tfr.denominator < 1:
            raise ConfigurationError(f"entrance {self.name}: tfr must be 1/k with integer k >= 1")
        object.__setattr__(self, "tfr", tfr)

    @property
    def name(self) -> str:
        return f"{self.direction}{self.index}"

    @property
    def period(self) -> int:
        return self.tfr.denominator


@dataclass
class Vehicle:
    id: int
    route: list[int]
    lane: int | None
    cell: int | None
    waiting_accrued: int
    spawn_time: int


def signal_state(intersection: Intersection | SignalPhasePlan, t: int) -> str:
    plan = intersection.phase_plan if isinstance(intersection, Intersection) else intersection
    return NS_GREEN if (t - plan.cycle_offset) % CYCLE < plan.ns_green else EW_GREEN


def apply_action(intersection: Intersection, action_index: int) -> SignalPhasePlan:
    """Schedule a green split; it takes effect at the next cycle start.

    Returns the plan that will be in force from that cycle on.
    """
    if not 0 <= action_index < len(GREEN_CHOICES):
        raise ValueError(f"action index must be in 0..{len(GREEN_CHOICES) - 1}, got {action_index}")
    plan = intersection.phase_plan
    plan.pending = GREEN_CHOICES[action_index]
    return SignalPhasePlan(plan.pending, plan.cycle_offset)


class RoadNetwork:
    """Grid topology plus the mutable vehicle state of one simulation."""

    def __init__(self, rows: int, cols: int, edge_length: float, cell_length: float):
        if rows < 1 or cols < 1:
            raise ConfigurationError("rows and cols must be >= 1")
        if cell_length <= 0:
            raise ConfigurationError("cell_length must be positive")
        n_cells = edge_length / cell_length
        if edge_length <= 0 or abs(n_cells - round(n_cells)) > 1e-9:
            raise ConfigurationError(
                f"edge_length {edge_length} is not divisible by cell_length {cell_length}")
        self.rows = rows
        self.cols = cols
        self.edge_length = edge_length
        self.cell_length = cell_length
        self.lane_cells = int(round(n_cells))

        self.intersections = [Intersection(r * cols + c, (r, c)) for r in range(rows) for c in range(cols)]
        self.lanes: list[Lane] = []
        self.entry_lane: dict[tuple[str, int], int] = {}
        self._build_topology()
        self._build_cell_arrays()
        self.reset([])

    # -- topology -------------------------------------------------------

    def _grid_index(self, r, c):
        return r * self.cols + c

    def _build_topology(self):
        rows, cols = self.rows, self.cols
        corridors = []
        # (origin side, entrance index, ordered intersections along the route)
        for c in range(cols):
            corridors.append(("N", c + 1, [self._grid_index(r, c) for r in range(rows)]))
        for c in range(cols):
            corridors.append(("S", c + 1, [self._grid_index(r, c) for r in reversed(range(rows))]))
        for r in range(rows):
            corridors.append(("E", r + 1, [self._grid_index(r, c) for c in reversed(range(cols))]))
        for r in range(rows):
            corridors.append(("W", r + 1, [self._grid_index(r, c) for c in range(cols)]))

        for k, (origin, idx, path) in enumerate(corridors):
            prev = None
            upstream = None
            for seg, node in enumerate(path + [None]):
                lane = Lane(len(self.lanes), origin, k, seg, node, upstream)
                self.lanes.append(lane)
                if prev is None:
                    self.entry_lane[(origin, idx)] = lane.id
                else:
                    self.lanes[prev].next_lane = lane.id
                if node is not None:
                    self.intersections[node].incoming_lanes[origin] = lane.id
                prev = lane.id
                upstream = node

        for inter in self.intersections:
            r, c = inter.id
            inter.neighbor_slots = {
                "N": self._grid_index(r - 1, c) if r > 0 else None,
                "S": self._grid_index(r + 1, c) if r < rows - 1 else None,
                "E": self._grid_index(r, c + 1) if c < cols - 1 else None,
                "W": self._grid_index(r, c - 1) if c > 0 else None,
            }

    def _build_cell_arrays(self):
        L = self.lane_cells
        n_cells = len(self.lanes) * L
        nxt = np.empty(n_cells, dtype=np.int64)
        for lane in self.lanes:
            base = lane.id * L
            nxt[base + 1:base + L] = np.arange(base, base + L - 1)
            nxt[base] = -1 if lane.next_lane is None else lane.next_lane * L + L - 1
        # straight routes: every cell has at most one predecessor, so moves never collide
        targets = nxt[nxt >= 0]
        assert len(np.unique(targets)) == len(targets)
        self.next_cell = nxt

        stop_lanes = [lane for lane in self.lanes if not lane.is_exit]
        self.stop_cells = np.array([lane.id * L for lane in stop_lanes], dtype=np.int64)
        self.stop_intersection = np.array([lane.to_intersection for lane in stop_lanes], dtype=np.int64)
        self.stop_is_ns = np.array([lane.origin in ("N", "S") for lane in stop_lanes], dtype=bool)

        # incoming lanes per intersection in (N, S, E, W) order
        self.approach_lanes = np.array(
            [[inter.incoming_lanes[a] for a in APPROACHES] for inter in self.intersections], dtype=np.int64)

    # -- state ----------------------------------------------------------

    def reset(self, demand):
        """Empty the network and load a fresh demand schedule."""
        demand = list(demand)
        seen = set()
        for e in demand:
            limit = self.cols if e.direction in ("N", "S") else self.rows
            if not 1 <= e.index <= limit:
                raise ConfigurationError(f"entrance {e.name} does not exist on a {self.rows}x{self.cols} grid")
            if e.name in seen:
                raise ConfigurationError(f"entrance {e.name} listed twice")
            seen.add(e.name)
        self.demand = demand
        self.t = 0
        self.cell_vehicle = np.full(len(self.lanes) * self.lane_cells, -1, dtype=np.int64)
        self.stopped = np.zeros(len(self.cell_vehicle), dtype=bool)
        self.generated = [0] * len(demand)
        self.backlog = [deque() for _ in demand]
        self.total_demand = sum(e.ivn for e in demand)
        self.n_generated = 0
        self.n_placed = 0
        self.n_exited = 0
        self.exited_ids: list[int] = []
        self._n_vehicles = 0
        self.waiting = np.zeros(max(self.total_demand, 16), dtype=np.int64)
        self.spawn_time = np.zeros_like(self.waiting)
        self.exit_time = np.full_like(self.waiting, -1)
        self.route_start = np.zeros_like(self.waiting)
        for inter in self.intersections:
            inter.phase_plan = SignalPhasePlan(20, inter.phase_plan.cycle_offset)

    def _new_vehicle(self, t, first_lane):
        vid = self._n_vehicles
        if vid >= len(self.waiting):
            grow = len(self.waiting)
            self.waiting = np.concatenate([self.waiting, np.zeros(grow, dtype=np.int64)])
            self.spawn_time = np.concatenate([self.spawn_time, np.zeros(grow, dtype=np.int64)])
            self.exit_time = np.concatenate([self.exit_time, np.full(grow, -1, dtype=np.int64)])
            self.route_start = np.concatenate([self.route_start, np.zeros(grow, dtype=np.int64)])
        self._n_vehicles += 1
        self.spawn_time[vid] = t
        self.route_start[vid] = first_lane
        return vid

    def place_vehicle(self, lane_id: int, cell: int) -> int:
        """Put a vehicle directly on a lane; used for hand-built scenarios."""
        idx = lane_id * self.lane_cells + cell
        if self.cell_vehicle[idx] >= 0:
            raise ValueError(f"cell {cell} of lane {lane_id} is occupied")
        vid = self._new_vehicle(self.t, lane_id)
        self.cell_vehicle[idx] = vid
        self.n_generated += 1
        self.n_placed += 1
        return vid

    @property
    def n_in_network(self) -> int:
        return int(np.count_nonzero(self.cell_vehicle >= 0))

    @property
    def n_backlog(self) -> int:
        return sum(len(q) for q in self.backlog)

    def active_vehicle_count(self) -> int:
        """Vehicles still in the grid, queued at an entrance or not yet generated."""
        not_generated = sum(e.ivn - g for e, g in zip(self.demand, self.generated))
        return self.n_in_network + self.n_backlog + not_generated

    def vehicle(self, vid: int) -> Vehicle:
        pos = np.flatnonzero(self.cell_vehicle == vid)
        lane = cell = None
        if len(pos):
            lane, cell = divmod(int(pos[0]), self.lane_cells)
        route = [int(self.route_start[vid])]
        while self.lanes[route[-1]].next_lane is not None:
            route.append(self.lanes[route[-1]].next_lane)
        return Vehicle(vid, route, lane, cell, int(self.waiting[vid]), int(self.spawn_time[vid]))

    def lane_occupancy(self, lane_id: int) -> np.ndarray:
        L = self.lane_cells
        return self.cell_vehicle[lane_id * L:(lane_id + 1) * L] >= 0

    # -- dynamics -------------------------------------------------------

    def _latch_plans(self, t):
        for inter in self.intersections:
            plan = inter.phase_plan
            if plan.pending is not None and (t - plan.cycle_offset) % CYCLE == 0:
                plan.ns_green = plan.pending
                plan.pending = None

    def ns_green_mask(self, t: int) -> np.ndarray:
        return np.array([signal_state(inter, t) == NS_GREEN for inter in self.intersections], dtype=bool)

    def sim_step(self, t: int | None = None) -> np.ndarray:
        """Advance every vehicle by at most one cell.

        Returns the ids of vehicles that left the grid during this second.
        """
        t = self.t if t is None else t
        self._latch_plans(t)
        cells = self.cell_vehicle
        occ = cells >= 0

        blocked = np.zeros(len(cells), dtype=bool)
        ns = self.ns_green_mask(t)
        blocked[self.stop_cells] = ns[self.stop_intersection] != self.stop_is_ns

        nxt = self.next_cell
        occ_ext = np.append(occ, False)
        moving = occ & ~blocked & ~occ_ext[nxt]
        stopped = occ & ~moving

        src = np.flatnonzero(moving)
        dst = nxt[src]
        vids = cells[src]
        exits = dst < 0
        new_cells = np.where(stopped, cells, -1)
        new_cells[dst[~exits]] = vids[~exits]

        exited = vids[exits]
        self.exit_time[exited] = t
        self.exited_ids.extend(exited.tolist())
        self.n_exited += len(exited)

        self.waiting[cells[stopped]] += 1
        for q in self.backlog:
            for vid in q:
                self.waiting[vid] += 1

        self.cell_vehicle = new_cells
        self.stopped = stopped
        return exited

    def spawn_step(self, t: int | None = None) -> list[int]:
        """Generate scheduled arrivals at ``t`` and release queued ones into free entry cells."""
        t = self.t if t is None else t
        created = []
        L = self.lane_cells
        for i, e in enumerate(self.demand):
            lane = self.entry_lane[(e.direction, e.index)]
            if t % e.period == 0 and self.generated[i] < e.ivn:
                vid = self._new_vehicle(t, lane)
                self.generated[i] += 1
                self.n_generated += 1
                self.backlog[i].append(vid)
                created.append(vid)
            entry = lane * L + L - 1
            if self.backlog[i] and self.cell_vehicle[entry] < 0:
                self.cell_vehicle[entry] = self.backlog[i].popleft()
                self.stopped[entry] = False
                self.n_placed += 1
        return created

    def step(self):
        """One simulated second: move, then spawn, then advance the clock."""
        self.sim_step(self.t)
        self.spawn_step(self.t)
        self.t += 1

    def queue_lengths(self) -> np.ndarray:
        """Stopped vehicles counted contiguously back from each stop cell.

        Shape (n_intersections, 4) in (N, S, E, W) approach order.
        """
        L = self.lane_cells
        halted = (self.stopped & (self.cell_vehicle >= 0)).reshape(-1, L)
        lanes = halted[self.approach_lanes]
        return np.cumprod(lanes, axis=-1).sum(axis=-1)

    def queue_length(self, intersection: int) -> int:
        return int(self.queue_lengths()[intersection].sum())


def build_grid(rows: int, cols: int, edge_length: float, cell_length: float = 5.0) -> RoadNetwork:
    return RoadNetwork(rows, cols, edge_length, cell_length)
