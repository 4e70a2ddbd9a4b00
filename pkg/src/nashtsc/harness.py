"""Episode loop, experiment driver and metric output."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import NashController
from .baselines import DQNController, FixedTimeController, MAQLController
from .config import ExperimentConfig
from .observation import WaitingMeter, encode_all, epoch_reward
from .sim import CYCLE, RoadNetwork, apply_action

log = logging.getLogger(__name__)

CSV_COLUMNS = ("episode", "total_reward", "avg_waiting", "avg_queue", "truncated")


@dataclass
class MetricsRow:
    episode: int
    total_reward: float
    avg_waiting: float
    avg_queue: float
    truncated: bool = False

    def as_csv(self):
        return [self.episode, repr(float(self.total_reward)), repr(float(self.avg_waiting)),
                repr(float(self.avg_queue)), int(self.truncated)]


@dataclass
class EpisodeTrace:
    """Optional per-episode record for inspection and tests."""

    waiting: list = field(default_factory=list)      # per-epoch W arrays
    rewards: list = field(default_factory=list)      # per-epoch reward arrays (from the second epoch)
    actions: list = field(default_factory=list)
    counts: list = field(default_factory=list)       # per-second (generated, placed, in_network, exited, backlog)
    record_counts: bool = False

    def on_step(self, network: RoadNetwork):
        if self.record_counts:
            self.counts.append((network.n_generated, network.n_placed, network.n_in_network,
                                network.n_exited, network.n_backlog))


def build_network(cfg: ExperimentConfig) -> RoadNetwork:
    net = RoadNetwork(cfg.rows, cfg.cols, cfg.edge_length, cfg.cell_length)
    net.reset(cfg.demand)
    return net


def make_controller(cfg: ExperimentConfig, network: RoadNetwork, rng: np.random.Generator, kind=None):
    kind = cfg.controller if kind is None else kind
    if kind == "opndqn":
        return NashController(network, cfg, rng)
    if kind == "dqn":
        return DQNController(network, cfg, rng)
    if kind == "maql":
        return MAQLController(network, cfg, rng)
    if kind == "fixed":
        return FixedTimeController(len(network.intersections), cfg.fixed_action)
    raise ValueError(f"unknown controller {kind!r}")


def run_episode(cfg: ExperimentConfig, controller, network: RoadNetwork, episode: int,
                trace: EpisodeTrace | None = None) -> MetricsRow:
    network.reset(cfg.demand)
    R = cfg.observed_cells
    meter = WaitingMeter(network, R)
    w_prev = None
    total_reward = 0
    epoch_queues = []
    truncated = False

    while network.active_vehicle_count() > 0:
        if network.t >= cfg.max_episode_seconds:
            truncated = True
            break
        obs = encode_all(network, R)
        queues = network.queue_lengths()
        actions = controller.act(obs, queues)
        for inter, a in zip(network.intersections, actions):
            apply_action(inter, int(a))

        queue_sum = 0.0
        seconds = 0
        for _ in range(CYCLE):
            network.step()
            meter.record(network)
            queue_sum += network.queue_lengths().sum(axis=1).mean()
            seconds += 1
            if trace is not None:
                trace.on_step(network)
            if network.active_vehicle_count() == 0 or network.t >= cfg.max_episode_seconds:
                break
        w = meter.take()
        epoch_queues.append(queue_sum / seconds)
        next_obs = encode_all(network, R)
        next_queues = network.queue_lengths()
        if trace is not None:
            trace.waiting.append(w)
            trace.actions.append(np.asarray(actions))

        if w_prev is not None:
            rewards = epoch_reward(w_prev, w)
            total_reward += int(rewards.sum())
            if trace is not None:
                trace.rewards.append(rewards)
            if controller.training:
                controller.observe(obs, actions, rewards, next_obs, queues, next_queues)
        w_prev = w

    done = network.exited_ids
    avg_waiting = float(network.waiting[done].mean()) if done else 0.0
    avg_queue = float(np.mean(epoch_queues)) if epoch_queues else 0.0
    return MetricsRow(episode, float(total_reward), avg_waiting, avg_queue, truncated)


def run_experiment(cfg: ExperimentConfig, out_csv=None, checkpoint_dir=None, progress=None):
    """Train ``cfg.controller`` for ``cfg.episodes`` episodes.

    Writes one CSV row per episode (the header alone when there are none)
    and the final checkpoint.  Returns the list of rows.
    """
    rng = np.random.default_rng(cfg.seed)
    network = build_network(cfg)
    controller = make_controller(cfg, network, rng)
    rows = []
    handle = None
    if out_csv is not None:
        Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
        handle = open(out_csv, "w", newline="")
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
    try:
        for ep in range(1, cfg.episodes + 1):
            row = run_episode(cfg, controller, network, ep)
            rows.append(row)
            if handle is not None:
                writer.writerow(row.as_csv())
                handle.flush()
            log.info("episode %d reward %.0f waiting %.2f queue %.2f", ep, row.total_reward,
                     row.avg_waiting, row.avg_queue)
            if progress is not None:
                progress(row)
    finally:
        if handle is not None:
            handle.close()
    if checkpoint_dir is not None:
        controller.save(checkpoint_dir)
    return rows


def evaluate(cfg: ExperimentConfig, checkpoint_dir) -> MetricsRow:
    """Greedy rollout of a saved controller; no exploration, no learning."""
    with open(Path(checkpoint_dir) / "counters.json") as f:
        kind = json.load(f)["kind"]
    rng = np.random.default_rng(cfg.seed)
    network = build_network(cfg)
    controller = make_controller(cfg, network, rng, kind)
    controller.load(checkpoint_dir)
    controller.training = False
    return run_episode(cfg, controller, network, 0)


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
        return [MetricsRow(int(r["episode"]), float(r["total_reward"]), float(r["avg_waiting"]),
                           float(r["avg_queue"]), bool(int(r["truncated"]))) for r in reader]
