"""Comparison controllers: fixed split, independent DQN, tabular Q-learning."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .agents import N_ACTIONS, Controller, DeepController, QAgent, epsilon_schedule
from .nn import HIDDEN_SIZES
from .replay import Experience

QUEUE_BIN_EDGES = (2, 5, 10)  # bins: 0-2, 3-5, 6-10, >10
N_STATES = 4 ** 4


class FixedTimeController(Controller):
    kind = "fixed"

    def __init__(self, n_agents, action=2):
        super().__init__()
        if not 0 <= action < N_ACTIONS:
            raise ValueError(f"fixed action must be in 0..{N_ACTIONS - 1}")
        self.action = action
        self.n_agents = n_agents

    def act(self, obs, queues):
        return np.full(self.n_agents, self.action, dtype=np.int64)


class IndependentDQNAgent(QAgent):
    """Plain DQN on the agent's own observation; neighbors are invisible."""

    def __init__(self, index, obs_dim, rng, capacity=20000, hidden=HIDDEN_SIZES):
        super().__init__(index, obs_dim, rng, capacity, hidden)
        self.obs_dim = obs_dim

    def q_values(self, obs, net=None):
        net = self.online_net if net is None else net
        return net.forward(obs)


def independent_dqn_target(agent, e: Experience, gamma=0.99) -> float:
    return float(independent_dqn_targets(agent, [e], gamma)[0])


def independent_dqn_targets(agent, batch, gamma=0.99) -> np.ndarray:
    rewards = np.array([e.reward for e in batch], dtype=np.float64)
    if gamma == 0:
        return rewards
    q_next = agent.target_net.forward(np.stack([e.next_state for e in batch]))
    return rewards + gamma * q_next.max(axis=1)


class DQNController(DeepController):
    kind = "dqn"

    def __init__(self, network, cfg, rng):
        super().__init__(cfg, rng)
        obs_dim = 4 * cfg.observed_cells
        self.agents = [IndependentDQNAgent(inter.index, obs_dim, rng, cfg.replay_capacity)
                       for inter in network.intersections]

    def act(self, obs, queues):
        eps = self.epsilon if self.training else 0.0
        if self.training:
            self.decisions += 1
        actions = np.empty(len(self.agents), dtype=np.int64)
        explore = self.rng.random(len(self.agents)) < eps
        for a in self.agents:
            if explore[a.index]:
                actions[a.index] = self.rng.integers(N_ACTIONS)
            else:
                actions[a.index] = int(np.argmax(a.q_values(obs[a.index])))
        return actions

    def observe(self, obs, actions, rewards, next_obs, queues, next_queues):
        cfg = self.cfg
        for a in self.agents:
            a.buffer.push(Experience(np.asarray(obs[a.index], dtype=np.float64), int(actions[a.index]), (),
                                     float(rewards[a.index]) * cfg.reward_scale,
                                     np.asarray(next_obs[a.index], dtype=np.float64)))
            a.env_steps += 1
        losses = []
        for a in self.agents:
            if not a.ready(cfg.batch_size, cfg.pretrain_steps):
                continue
            batch = a.buffer.sample(cfg.batch_size, self.rng)
            y = independent_dqn_targets(a, batch, cfg.gamma)
            x = np.stack([e.state for e in batch])
            acts = np.array([e.own_action for e in batch], dtype=np.int64)
            losses.append(a.fit(x, acts, y, cfg.learning_rate, cfg.rms_decay, cfg.rms_eps,
                                cfg.target_update_interval))
        return float(np.mean(losses)) if losses else None


def discretize_state(queues) -> int:
    """Queue-length bin of each approach, read as a base-4 number (N most significant)."""
    q = np.asarray(queues)
    if q.shape != (4,) or np.any(q < 0):
        raise ValueError("expected 4 non-negative queue counts")
    bins = np.searchsorted(QUEUE_BIN_EDGES, q, side="left")
    return int(((bins[0] * 4 + bins[1]) * 4 + bins[2]) * 4 + bins[3])


class TabularMAQLAgent:
    def __init__(self, index, alpha=0.1):
        self.index = index
        self.alpha = alpha
        self.table = np.zeros((N_STATES, N_ACTIONS))


def maql_update(agent: TabularMAQLAgent, s, a, r, s_next, gamma=0.99) -> TabularMAQLAgent:
    q = agent.table
    q[s, a] += agent.alpha * (r + gamma * q[s_next].max() - q[s, a])
    return agent


class MAQLController(Controller):
    kind = "maql"

    def __init__(self, network, cfg, rng):
        super().__init__()
        self.cfg = cfg
        self.rng = rng
        self.agents = [TabularMAQLAgent(inter.index, cfg.maql_alpha) for inter in network.intersections]

    def act(self, obs, queues):
        cfg = self.cfg
        eps = epsilon_schedule(self.decisions, cfg.epsilon_start, cfg.epsilon_end,
                               cfg.epsilon_decay_epochs) if self.training else 0.0
        if self.training:
            self.decisions += 1
        explore = self.rng.random(len(self.agents)) < eps
        actions = np.empty(len(self.agents), dtype=np.int64)
        for a in self.agents:
            if explore[a.index]:
                actions[a.index] = self.rng.integers(N_ACTIONS)
            else:
                actions[a.index] = int(np.argmax(a.table[discretize_state(queues[a.index])]))
        return actions

    def observe(self, obs, actions, rewards, next_obs, queues, next_queues):
        for a in self.agents:
            maql_update(a, discretize_state(queues[a.index]), int(actions[a.index]),
                        float(rewards[a.index]) * self.cfg.reward_scale,
                        discretize_state(next_queues[a.index]), self.cfg.gamma)
        return None

    def save(self, directory):
        super().save(directory)
        for a in self.agents:
            np.save(Path(directory) / f"agent_{a.index}_qtable.npy", a.table)

    def load(self, directory):
        counters = super().load(directory)
        for a in self.agents:
            a.table[...] = np.load(Path(directory) / f"agent_{a.index}_qtable.npy")
        return counters
