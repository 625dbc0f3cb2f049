"""Discrete-time traffic world: one controlled ego vehicle plus scripted traffic.

The ego is driven purely by a longitudinal acceleration command.  Background
vehicles follow a gap-limited safe-speed rule: each step a vehicle may not
move faster than would keep at least ``min_gap_m`` to its leader's tail at
the end of the step, assuming the leader does not move.  Because leaders
never move backwards this is conservative, and background vehicles can never
create an overlap.  All background decisions are computed from a snapshot of
positions taken before anyone moves, so the update is order-independent.

An episode ends at the first collision, on arrival within the destination
tolerance, or when the step budget is exhausted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..seeding import derive_seed
from .network import RoadNetwork
from .reward import EventFlags, compute_reward

CAUSE_NONE = "none"
CAUSE_COLLISION = "collision"
CAUSE_DESTINATION = "destination"
CAUSE_MAX_STEPS = "max-steps"


class EpisodeDoneError(RuntimeError):
    """step() was called after the episode already terminated."""


class UnreachableDestinationError(ValueError):
    """The ego route does not end within tolerance of the destination node."""


@dataclass(frozen=True)
class SpawnSpec:
    """Scripted background spawn, positioned in route coordinates.

    ``speed_factor`` scales the edge speed limit into the vehicle's desired
    speed; 0 keeps it parked.
    """

    step: int
    route: str
    pos_m: float = 0.0
    speed_mps: float = 0.0
    lane: int = 0
    speed_factor: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    network: RoadNetwork
    ego_route: str
    destination_node: str
    destination_tolerance_m: float = 5.0
    background_count: int = 0
    background_spawns: tuple[SpawnSpec, ...] = ()
    step_length_s: float = 1.0
    max_steps: int = 900
    master_seed: int = 0
    # vehicle physics
    accel_min_mps2: float = -4.5
    accel_max_mps2: float = 2.6
    vehicle_length_m: float = 5.0
    min_gap_m: float = 2.5
    intersection_box_m: float = 5.0
    # event-flag predicates
    braking_accel_mps2: float = -0.5
    waiting_speed_mps: float = 0.1
    waiting_light_range_m: float = 15.0
    # background driving
    bg_accel_mps2: float = 2.6
    bg_speed_factor_min: float = 0.8
    bg_speed_factor_max: float = 1.0
    bg_lookahead_m: float = 100.0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.step_length_s <= 0:
            raise ValueError(f"step_length_s must be > 0, got {self.step_length_s}")
        if self.destination_tolerance_m <= 0:
            raise ValueError(f"destination_tolerance_m must be > 0, got {self.destination_tolerance_m}")
        if self.accel_min_mps2 >= self.accel_max_mps2:
            raise ValueError("accel_min_mps2 must be below accel_max_mps2")
        if self.background_count < 0:
            raise ValueError("background_count must be >= 0")


@dataclass
class VehicleState:
    vehicle_id: str
    edge_id: str
    pos_m: float
    lane: int
    speed_mps: float
    accel_mps2: float
    length_m: float
    route: tuple[str, ...]
    route_idx: int
    role: str  # "ego" | "background"
    speed_factor: float = 1.0

    @property
    def tail_m(self) -> float:
        return self.pos_m - self.length_m


@dataclass(frozen=True)
class EgoObservation:
    """Six-component state vector fed to the policy."""

    pos_x: float
    pos_y: float
    speed: float
    heading: float
    acceleration: float
    dest_distance: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.pos_x, self.pos_y, self.speed, self.heading, self.acceleration, self.dest_distance],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class StepOutcome:
    observation: EgoObservation
    reward: float
    done: bool
    cause: str
    flags: EventFlags


def distance_to_destination(pos: tuple[float, float], dest: tuple[float, float]) -> float:
    """Euclidean distance between two planar points."""
    return math.hypot(pos[0] - dest[0], pos[1] - dest[1])


class TrafficWorld:
    """Single-episode traffic environment.  Not thread-safe; one owner at a time."""

    def __init__(self, scenario: ScenarioConfig):
        self.scenario = scenario
        self.net = scenario.network
        self._validate_scenario()
        self._active = False

    def _validate_scenario(self) -> None:
        sc = self.scenario
        if sc.ego_route not in self.net.routes:
            raise ValueError(f"unknown ego route {sc.ego_route!r}")
        if sc.destination_node not in self.net.nodes:
            raise ValueError(f"unknown destination node {sc.destination_node!r}")
        for spawn in sc.background_spawns:
            if spawn.route not in self.net.routes:
                raise ValueError(f"spawn references unknown route {spawn.route!r}")
        end_node = self.net.nodes[self.net.route_end_node(sc.ego_route)]
        dest = self.net.nodes[sc.destination_node]
        gap = distance_to_destination((end_node.x, end_node.y), (dest.x, dest.y))
        if gap > sc.destination_tolerance_m:
            raise UnreachableDestinationError(
                f"ego route {sc.ego_route!r} ends {gap:.1f} m from destination "
                f"{sc.destination_node!r} (tolerance {sc.destination_tolerance_m} m)"
            )

    # ------------------------------------------------------------------ reset

    def reset(self, episode_seed: int) -> EgoObservation:
        sc = self.scenario
        self._validate_scenario()
        self._rng = np.random.Generator(np.random.PCG64(derive_seed(sc.master_seed, episode_seed)))
        self._steps = 0
        self._done = False
        self._cause = CAUSE_NONE
        self._active = True
        self._distance_traveled = 0.0
        self._traveled_freeflow_s = 0.0
        self._next_bg_id = 0
        self._pending_spawns = list(sc.background_spawns)

        route = self.net.routes[sc.ego_route]
        self.ego = VehicleState(
            vehicle_id="ego",
            edge_id=route[0],
            pos_m=0.0,
            lane=0,
            speed_mps=0.0,
            accel_mps2=0.0,
            length_m=sc.vehicle_length_m,
            route=route,
            route_idx=0,
            role="ego",
        )
        self.background: list[VehicleState] = []
        self._spawn_random_background(sc.background_count)
        return self._observe()

    def _spawn_random_background(self, count: int) -> None:
        sc = self.scenario
        route_names = sorted(self.net.routes)
        for _ in range(count):
            placed = False
            for _attempt in range(100):
                route_name = route_names[int(self._rng.integers(len(route_names)))]
                route = self.net.routes[route_name]
                route_len = self.net.route_length_m(route_name)
                pos_on_route = float(self._rng.uniform(0.0, route_len))
                edge_id, pos, idx = self._route_point(route, pos_on_route)
                factor = float(self._rng.uniform(sc.bg_speed_factor_min, sc.bg_speed_factor_max))
                speed = float(self._rng.uniform(0.0, self.net.edges[edge_id].speed_limit_mps * factor))
                veh = VehicleState(
                    vehicle_id=f"bg{self._next_bg_id}",
                    edge_id=edge_id,
                    pos_m=pos,
                    lane=0,
                    speed_mps=speed,
                    accel_mps2=0.0,
                    length_m=sc.vehicle_length_m,
                    route=route,
                    route_idx=idx,
                    speed_factor=factor,
                    role="background",
                )
                if self._placement_clear(veh):
                    self.background.append(veh)
                    self._next_bg_id += 1
                    placed = True
                    break
            if not placed:
                raise ValueError(
                    f"could not place {count} background vehicles without overlap; "
                    "reduce background_count or enlarge the network"
                )

    def _route_point(self, route: tuple[str, ...], pos_on_route: float) -> tuple[str, float, int]:
        remaining = pos_on_route
        for idx, eid in enumerate(route):
            length = self.net.edges[eid].length_m
            if remaining <= length or idx == len(route) - 1:
                return eid, min(remaining, length), idx
            remaining -= length
        raise AssertionError("unreachable")

    def _placement_clear(self, veh: VehicleState) -> bool:
        for other in [self.ego, *self.background]:
            if other.edge_id == veh.edge_id and other.lane == veh.lane:
                if veh.pos_m + self.scenario.min_gap_m > other.tail_m and other.pos_m + self.scenario.min_gap_m > veh.tail_m:
                    return False
        return True

    # ------------------------------------------------------------------- step

    def step(self, action_accel: float) -> StepOutcome:
        if not self._active:
            raise EpisodeDoneError("reset() must be called before step()")
        if self._done:
            raise EpisodeDoneError("episode already terminated; call reset()")
        sc = self.scenario
        dt = sc.step_length_s
        t_start = self._steps * dt

        self._insert_scheduled_spawns()

        accel = float(np.clip(action_accel, sc.accel_min_mps2, sc.accel_max_mps2))
        prev_speed = self.ego.speed_mps
        new_speed = max(0.0, prev_speed + accel * dt)
        self._advance_ego(new_speed * dt)
        self.ego.speed_mps = new_speed
        self.ego.accel_mps2 = (new_speed - prev_speed) / dt

        self.background_step(t_start)

        collided = self.collision_check()
        reached = (not collided) and self._dest_distance() <= sc.destination_tolerance_m
        flags = EventFlags(
            collided=collided,
            reached_destination=reached,
            braking=self.ego.accel_mps2 < sc.braking_accel_mps2,
            waiting_at_light=self._ego_waiting_at_light(t_start),
            speed_nonzero=self.ego.speed_mps != 0.0,
        )
        reward = compute_reward(flags)

        self._steps += 1
        if collided:
            self._cause = CAUSE_COLLISION
        elif reached:
            self._cause = CAUSE_DESTINATION
        elif self._steps >= sc.max_steps:
            self._cause = CAUSE_MAX_STEPS
        else:
            self._cause = CAUSE_NONE
        self._done = self._cause != CAUSE_NONE

        return StepOutcome(
            observation=self._observe(),
            reward=reward,
            done=self._done,
            cause=self._cause,
            flags=flags,
        )

    def _advance_ego(self, displacement: float) -> None:
        """Move the ego along its route, clamping at the end of the last edge."""
        self._distance_traveled += displacement
        ego = self.ego
        pos = ego.pos_m + displacement
        moved_from = ego.pos_m
        while pos > self.net.edges[ego.edge_id].length_m:
            edge_len = self.net.edges[ego.edge_id].length_m
            self._traveled_freeflow_s += (edge_len - moved_from) / self.net.edges[ego.edge_id].speed_limit_mps
            if ego.route_idx + 1 >= len(ego.route):
                overshoot = pos - edge_len
                self._distance_traveled -= overshoot
                pos = edge_len
                break
            pos -= edge_len
            moved_from = 0.0
            ego.route_idx += 1
            ego.edge_id = ego.route[ego.route_idx]
        else:
            self._traveled_freeflow_s += (pos - moved_from) / self.net.edges[ego.edge_id].speed_limit_mps
        ego.pos_m = pos

    def _insert_scheduled_spawns(self) -> None:
        due = [s for s in self._pending_spawns if s.step <= self._steps]
        if not due:
            return
        kept = []
        for spawn in self._pending_spawns:
            if spawn.step > self._steps:
                kept.append(spawn)
                continue
            route = self.net.routes[spawn.route]
            edge_id, pos, idx = self._route_point(route, spawn.pos_m)
            veh = VehicleState(
                vehicle_id=f"bg{self._next_bg_id}",
                edge_id=edge_id,
                pos_m=pos,
                lane=spawn.lane,
                speed_mps=spawn.speed_mps,
                accel_mps2=0.0,
                length_m=self.scenario.vehicle_length_m,
                route=route,
                route_idx=idx,
                role="background",
                speed_factor=spawn.speed_factor,
            )
            if self._placement_clear(veh):
                self.background.append(veh)
                self._next_bg_id += 1
            else:
                # deferred to the next step rather than dropped
                kept.append(replace(spawn, step=spawn.step + 1))
        self._pending_spawns = kept

    # ------------------------------------------------------- background logic

    def background_step(self, t: float | None = None) -> list[VehicleState]:
        """Advance every background vehicle one step; returns the updated states.

        Decisions use a pre-move snapshot of all vehicles, so the result does
        not depend on update order.
        """
        if t is None:
            t = self._steps * self.scenario.step_length_s
        sc = self.scenario
        dt = sc.step_length_s
        # value snapshot: later updates must not change earlier vehicles' gaps
        snapshot = [
            (v.vehicle_id, v.edge_id, v.lane, v.pos_m, v.tail_m)
            for v in (self.ego, *self.background)
        ]

        survivors: list[VehicleState] = []
        for veh in self.background:
            edge = self.net.edges[veh.edge_id]
            candidate = min(
                veh.speed_mps + sc.bg_accel_mps2 * dt,
                edge.speed_limit_mps * veh.speed_factor,
                edge.speed_limit_mps,
            )
            gap = self._gap_to_leader(veh, snapshot)
            if gap is not None:
                candidate = min(candidate, max(0.0, (gap - sc.min_gap_m) / dt))
            stop_dist = self._distance_to_red_light(veh, t)
            if stop_dist is not None:
                candidate = min(candidate, max(0.0, stop_dist / dt))
            new_speed = max(0.0, candidate)

            prev_speed = veh.speed_mps
            veh.speed_mps = new_speed
            veh.accel_mps2 = (new_speed - prev_speed) / dt
            if self._advance_background(veh, new_speed * dt):
                survivors.append(veh)
        self.background = survivors
        return survivors

    def _advance_background(self, veh: VehicleState, displacement: float) -> bool:
        """Move a background vehicle; returns False when it leaves the network."""
        pos = veh.pos_m + displacement
        cyclic = self.net.edges[veh.route[-1]].to_node == self.net.edges[veh.route[0]].from_node
        while pos > self.net.edges[veh.edge_id].length_m:
            pos -= self.net.edges[veh.edge_id].length_m
            if veh.route_idx + 1 < len(veh.route):
                veh.route_idx += 1
            elif cyclic:
                veh.route_idx = 0
            else:
                return False
            veh.edge_id = veh.route[veh.route_idx]
            limit = self.net.edges[veh.edge_id].speed_limit_mps
            if veh.speed_mps > limit:
                veh.speed_mps = limit
        veh.pos_m = pos
        return True

    def _route_edges_ahead(self, veh: VehicleState) -> list[tuple[str, float]]:
        """(edge_id, distance from veh to that edge's start) within lookahead."""
        out = []
        dist = self.net.edges[veh.edge_id].length_m - veh.pos_m
        cyclic = self.net.edges[veh.route[-1]].to_node == self.net.edges[veh.route[0]].from_node
        idx = veh.route_idx
        while dist < self.scenario.bg_lookahead_m:
            if idx + 1 < len(veh.route):
                idx += 1
            elif cyclic:
                idx = 0
            else:
                break
            eid = veh.route[idx]
            out.append((eid, dist))
            dist += self.net.edges[eid].length_m
            if eid == veh.edge_id:  # wrapped all the way around
                break
        return out

    def _gap_to_leader(
        self, veh: VehicleState, snapshot: list[tuple[str, str, int, float, float]]
    ) -> float | None:
        """Bumper gap to the nearest vehicle ahead on this vehicle's path."""
        best: float | None = None
        for vid, edge_id, lane, pos, tail in snapshot:
            if vid == veh.vehicle_id or lane != veh.lane:
                continue
            if edge_id == veh.edge_id and pos > veh.pos_m:
                gap = tail - veh.pos_m
                best = gap if best is None else min(best, gap)
        if best is not None:
            return best
        for eid, dist_to_start in self._route_edges_ahead(veh):
            candidates = [
                dist_to_start + tail
                for vid, edge_id, lane, pos, tail in snapshot
                if vid != veh.vehicle_id and edge_id == eid and lane == veh.lane
            ]
            if candidates:
                return min(candidates)
        return None

    def _distance_to_red_light(self, veh: VehicleState, t: float) -> float | None:
        """Distance to the stop line of a red light at the end of the current edge."""
        light = self.net.lights.get(self.net.edges[veh.edge_id].to_node)
        if light is None or light.is_green(t):
            return None
        return self.net.edges[veh.edge_id].length_m - veh.pos_m

    # -------------------------------------------------------------- collision

    def collision_check(self) -> bool:
        """True when the ego overlaps another vehicle or shares an intersection box."""
        ego = self.ego
        for other in self.background:
            if other.edge_id == ego.edge_id and other.lane == ego.lane:
                if ego.pos_m > other.tail_m and other.pos_m > ego.tail_m:
                    return True
        ex, ey = self.net.point_at(ego.edge_id, ego.pos_m)
        ego_heading = self.net.heading(ego.edge_id)
        box = self.scenario.intersection_box_m
        for node in self.net.nodes.values():
            if math.hypot(ex - node.x, ey - node.y) > box:
                continue
            for other in self.background:
                if other.edge_id == ego.edge_id:
                    continue
                cross = math.sin(self.net.heading(other.edge_id) - ego_heading)
                if abs(cross) < 1e-9:  # parallel or oncoming traffic is not crossing
                    continue
                ox, oy = self.net.point_at(other.edge_id, other.pos_m)
                if math.hypot(ox - node.x, oy - node.y) <= box:
                    return True
        return False

    # ------------------------------------------------------------ observation

    def _dest_distance(self) -> float:
        dest = self.net.nodes[self.scenario.destination_node]
        pos = self.net.point_at(self.ego.edge_id, self.ego.pos_m)
        return distance_to_destination(pos, (dest.x, dest.y))

    def _ego_waiting_at_light(self, t: float) -> bool:
        sc = self.scenario
        if self.ego.speed_mps >= sc.waiting_speed_mps:
            return False
        stop_dist = self._distance_to_red_light(self.ego, t)
        return stop_dist is not None and stop_dist <= sc.waiting_light_range_m

    def _observe(self) -> EgoObservation:
        x, y = self.net.point_at(self.ego.edge_id, self.ego.pos_m)
        return EgoObservation(
            pos_x=x,
            pos_y=y,
            speed=self.ego.speed_mps,
            heading=self.net.heading(self.ego.edge_id),
            acceleration=self.ego.accel_mps2,
            dest_distance=self._dest_distance(),
        )

    # -------------------------------------------------------------- accessors

    @property
    def done(self) -> bool:
        return self._done

    @property
    def cause(self) -> str:
        return self._cause

    @property
    def steps(self) -> int:
        return self._steps

    @property
    def time_s(self) -> float:
        return self._steps * self.scenario.step_length_s

    @property
    def distance_traveled_m(self) -> float:
        return self._distance_traveled

    @property
    def traveled_freeflow_time_s(self) -> float:
        """Free-flow time over the distance the ego has actually covered."""
        return self._traveled_freeflow_s

    @property
    def route_freeflow_time_s(self) -> float:
        return self.net.route_freeflow_time_s(self.scenario.ego_route)
