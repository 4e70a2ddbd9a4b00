"""Nash deep Q-network agents.

Each intersection owns a Q-network that scores its five green splits given
its own observation and the actions of its grid neighbors.  The joint action
for an epoch comes from synchronous best-response rounds (a fictitious game)
played on the networks alone; the same game, played greedily on the stored
next observations, supplies the bootstrap action for the TD target.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn import HIDDEN_SIZES, QNetwork, init_network
from .replay import ABSENT, Experience, ReplayBuffer
from .sim import GREEN_CHOICES

N_ACTIONS = len(GREEN_CHOICES)
SLOTS = ("N", "S", "E", "W")


def epsilon_schedule(step, start=1.0, end=0.01, decay_steps=10000) -> float:
    """Linear decay from ``start`` to ``end`` over ``decay_steps`` decisions."""
    if decay_steps <= 0 or step >= decay_steps:
        return end
    return start + (end - start) * step / decay_steps


def encode_input(obs, neighbor_actions, n_actions=N_ACTIONS) -> np.ndarray:
    """Observation followed by one one-hot block per neighbor slot.

    Absent neighbors (``ABSENT``) leave their block at zero.  Works on a
    single sample or on a batch (leading axis).
    """
    obs = np.asarray(obs, dtype=np.float64)
    nb = np.asarray(neighbor_actions, dtype=np.int64)
    single = obs.ndim == 1
    obs = np.atleast_2d(obs)
    nb = nb.reshape(len(obs), -1)
    n_slots = nb.shape[1]
    onehot = np.zeros((len(obs), n_slots * n_actions))
    rows, slots = np.nonzero(nb >= 0)
    onehot[rows, slots * n_actions + nb[rows, slots]] = 1.0
    x = np.concatenate([obs, onehot], axis=1)
    return x[0] if single else x


class QAgent:
    """Online/target network pair with its own replay memory and counters."""

    n_actions = N_ACTIONS

    def __init__(self, index, input_dim, rng, capacity=20000, hidden=HIDDEN_SIZES):
        self.index = index
        self.online_net = init_network(input_dim, self.n_actions, rng, hidden)
        self.target_net = self.online_net.clone()
        self.buffer = ReplayBuffer(capacity)
        self.env_steps = 0
        self.train_steps = 0

    def fit(self, x, actions, targets, lr=1e-4, decay=0.9, eps=1e-8, target_interval=100) -> float:
        """One RMSprop step on a minibatch; syncs the target every ``target_interval`` steps."""
        loss, grads = self.online_net.td_gradients(x, actions, targets)
        self.online_net.rmsprop_step(grads, lr, decay, eps)
        self.train_steps += 1
        if target_interval and self.train_steps % target_interval == 0:
            self.target_net.copy_from(self.online_net)
        return loss

    def ready(self, batch_size, pretrain_steps) -> bool:
        return len(self.buffer) > batch_size and self.env_steps > pretrain_steps


class NashAgent(QAgent):
    def __init__(self, index, neighbor_index, obs_dim, rng, capacity=20000, hidden=HIDDEN_SIZES):
        self.neighbor_index = np.asarray(neighbor_index, dtype=np.int64)
        self.obs_dim = obs_dim
        super().__init__(index, obs_dim + len(self.neighbor_index) * N_ACTIONS, rng, capacity, hidden)

    @property
    def neighbor_ids(self):
        return [int(n) for n in self.neighbor_index if n >= 0]

    def q_values(self, obs, neighbor_actions, net: QNetwork | None = None) -> np.ndarray:
        net = self.online_net if net is None else net
        return net.forward(encode_input(obs, neighbor_actions))

    # Best-response rounds only change the neighbor one-hots, so the
    # observation's share of the first layer is computed once per game.
    def prepare(self, obs):
        w = self.online_net.weights[0]
        return np.atleast_2d(obs) @ w[:self.obs_dim] + self.online_net.biases[0]

    def q_prepared(self, prepared, neighbor_actions):
        net = self.online_net
        w_nb = net.weights[0][self.obs_dim:]
        z = prepared.copy()
        for slot in range(neighbor_actions.shape[1]):
            a = neighbor_actions[:, slot]
            present = a >= 0
            if present.all():
                z += w_nb[slot * N_ACTIONS + a]
            elif present.any():
                z[present] += w_nb[slot * N_ACTIONS + a[present]]
        h = np.maximum(z, 0.0)
        last = len(net.weights) - 1
        for i in range(1, last + 1):
            h = h @ net.weights[i] + net.biases[i]
            if i < last:
                h = np.maximum(h, 0.0)
        return h


def best_response(agent, obs, neighbor_actions) -> int:
    """Own action maximizing Q with neighbors held fixed; lowest index wins ties."""
    return int(np.argmax(agent.q_values(obs, neighbor_actions)))


def neighbor_actions_of(neighbor_index, joint):
    """Slot-ordered neighbor actions for every sample of a batched joint action.

    ``joint`` has shape (n_agents, B); returns (B, n_slots) with ABSENT fill.
    """
    idx = np.asarray(neighbor_index)
    out = np.full((joint.shape[1], len(idx)), ABSENT, dtype=np.int64)
    present = idx >= 0
    out[:, present] = joint[idx[present]].T
    return out


def play_rounds(agents, observations, init_actions, fixed=None, j_max=10):
    """Synchronous best-response rounds over a batch of independent games.

    ``observations[i]`` has shape (B, d_i); ``init_actions`` and ``fixed``
    have shape (n_agents, B).  Fixed agents keep their action and never
    count as improvable.  A game stops at the first round where no free
    agent can strictly raise its Q-value by switching to its best response,
    and the joint action held at that point (a pure equilibrium of the Q
    tables) is returned.  Games still moving after ``j_max`` updates return,
    per agent, the action held in the round where its Q-value was highest.

    Returns ``(actions, converged, rounds)``.
    """
    joint = np.array(init_actions, dtype=np.int64, copy=True)
    n, B = joint.shape
    fixed = np.zeros((n, B), dtype=bool) if fixed is None else np.asarray(fixed, dtype=bool)
    result = joint.copy()
    done = np.zeros(B, dtype=bool)
    rounds = np.zeros(B, dtype=np.int64)
    best_val = np.full((n, B), -np.inf)
    best_act = joint.copy()
    prepared = [a.prepare(o) if hasattr(a, "prepare") else None for a, o in zip(agents, observations)]

    for j in range(1, j_max + 2):
        live = np.flatnonzero(~done)
        sub = joint[:, live]
        cols = np.arange(len(live))
        responses = np.empty((n, len(live)), dtype=np.int64)
        improve = np.zeros((n, len(live)), dtype=bool)
        for i, agent in enumerate(agents):
            nb = neighbor_actions_of(agent.neighbor_index, sub)
            if prepared[i] is not None:
                q = agent.q_prepared(prepared[i][live], nb)
            else:
                q = np.atleast_2d(agent.q_values(np.asarray(observations[i])[live], nb))
            held = q[cols, sub[i]]
            responses[i] = np.argmax(q, axis=1)
            improve[i] = (q[cols, responses[i]] > held) & ~fixed[i, live]
            better = held > best_val[i, live]
            best_val[i, live] = np.where(better, held, best_val[i, live])
            best_act[i, live] = np.where(better, sub[i], best_act[i, live])

        stable = live[~improve.any(axis=0)]
        result[:, stable] = joint[:, stable]
        rounds[stable] = j - 1
        done[stable] = True
        if done.all():
            break
        if j == j_max + 1:
            left = ~done
            result[:, left] = best_act[:, left]
            rounds[left] = j_max
            break
        move = ~fixed & ~done
        joint[move] = responses_full(responses, live, joint)[move]

    return result, done, rounds


def responses_full(responses, live, joint):
    full = joint.copy()
    full[:, live] = responses
    return full


def fictitious_game(agents, observations, epsilon, rng, j_max=10, init_actions=None) -> np.ndarray:
    """Joint action for one decision epoch.

    Each agent independently explores with probability ``epsilon``: it then
    plays a uniform-random action that its neighbors see as fixed.  All
    other agents start from random actions (or ``init_actions``) and play
    best-response rounds.  Nothing is actuated here.
    """
    n = len(agents)
    explore = rng.random(n) < epsilon
    random_actions = np.array([rng.integers(a.n_actions) for a in agents], dtype=np.int64)
    start = random_actions if init_actions is None else np.where(explore, random_actions, init_actions)
    obs = [np.atleast_2d(o) for o in observations]
    actions, _, _ = play_rounds(agents, obs, start[:, None], explore[:, None], j_max)
    return actions[:, 0]


def nash_actions(agents, observations, rng, j_max=10) -> np.ndarray:
    """Greedy (no exploration) joint actions for a batch of joint states.

    ``observations[i]`` is (B, d_i); returns (n_agents, B).
    """
    B = len(observations[0])
    init = np.stack([rng.integers(a.n_actions, size=B) for a in agents])
    actions, _, _ = play_rounds(agents, observations, init, None, j_max)
    return actions


def _per_agent_batches(joint_states):
    # (B, n_agents, d) -> list of n_agents arrays (B, d)
    stacked = np.asarray(joint_states)
    return [stacked[:, i, :] for i in range(stacked.shape[1])]


def nash_targets(agents, i, batch, gamma, rng, j_max=10, nash=None) -> np.ndarray:
    """TD targets for agent ``i``: reward plus discounted target-network Q at the next Nash action."""
    agent = agents[i]
    rewards = np.array([e.reward for e in batch], dtype=np.float64)
    if gamma == 0:
        return rewards
    if nash is None:
        nash = nash_actions(agents, _per_agent_batches([e.joint_next_states for e in batch]), rng, j_max)
    next_states = np.stack([e.next_state for e in batch])
    nb = neighbor_actions_of(agent.neighbor_index, nash)
    q_next = agent.q_values(next_states, nb, net=agent.target_net)
    return rewards + gamma * q_next[np.arange(len(batch)), nash[i]]


def compute_target(agents, i, e: Experience, gamma=0.99, rng=None, j_max=10) -> float:
    rng = np.random.default_rng(0) if rng is None else rng
    return float(nash_targets(agents, i, [e], gamma, rng, j_max)[0])


def batch_inputs(agent, batch):
    states = np.stack([e.state for e in batch])
    nb = np.array([e.neighbor_actions for e in batch], dtype=np.int64).reshape(len(batch), -1)
    return encode_input(states, nb), np.array([e.own_action for e in batch], dtype=np.int64)


def train_step(agents, i, batch, gamma=0.99, rng=None, j_max=10, lr=1e-4, rms_decay=0.9, rms_eps=1e-8,
               target_interval=100, nash=None) -> float:
    """Fit agent ``i`` on one minibatch; returns the mean squared TD error."""
    rng = np.random.default_rng(0) if rng is None else rng
    agent = agents[i]
    y = nash_targets(agents, i, batch, gamma, rng, j_max, nash)
    x, a = batch_inputs(agent, batch)
    return agent.fit(x, a, y, lr, rms_decay, rms_eps, target_interval)


def build_nash_agents(network, obs_dim, rng, capacity=20000, hidden=HIDDEN_SIZES):
    agents = []
    for inter in network.intersections:
        slots = [ABSENT if inter.neighbor_slots[s] is None else inter.neighbor_slots[s] for s in SLOTS]
        agents.append(NashAgent(inter.index, slots, obs_dim, rng, capacity, hidden))
    return agents


class Controller:
    """Per-epoch decision contract shared by every signal controller.

    ``act`` maps the current per-agent observations (and approach queue
    counts) to one action per intersection; ``observe`` receives the
    completed epoch's transition and may train.
    """

    kind = "base"

    def __init__(self):
        self.training = True
        self.decisions = 0

    def act(self, obs, queues) -> np.ndarray:
        raise NotImplementedError

    def observe(self, obs, actions, rewards, next_obs, queues, next_queues):
        return None

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "counters.json", "w") as f:
            json.dump({"kind": self.kind, "decisions": self.decisions, **self._counters()}, f, indent=1)

    def load(self, directory):
        with open(Path(directory) / "counters.json") as f:
            counters = json.load(f)
        if counters.get("kind") != self.kind:
            raise ValueError(f"checkpoint was written by a {counters.get('kind')!r} controller, not {self.kind!r}")
        self.decisions = counters["decisions"]
        return counters

    def _counters(self):
        return {}


class DeepController(Controller):
    """Shared plumbing for controllers made of per-intersection Q agents."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        self.rng = rng
        self.agents: list[QAgent] = []

    @property
    def epsilon(self) -> float:
        cfg = self.cfg
        return epsilon_schedule(self.decisions, cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_decay_epochs)

    def _counters(self):
        return {"agents": {str(a.index): {"env_steps": a.env_steps, "train_steps": a.train_steps}
                           for a in self.agents}}

    def save(self, directory):
        super().save(directory)
        for a in self.agents:
            a.online_net.save(Path(directory) / f"agent_{a.index}_online.bin")
            a.target_net.save(Path(directory) / f"agent_{a.index}_target.bin")

    def load(self, directory):
        counters = super().load(directory)
        for a in self.agents:
            a.online_net.copy_from(QNetwork.load(Path(directory) / f"agent_{a.index}_online.bin"))
            a.target_net.copy_from(QNetwork.load(Path(directory) / f"agent_{a.index}_target.bin"))
            c = counters["agents"][str(a.index)]
            a.env_steps, a.train_steps = c["env_steps"], c["train_steps"]
        return counters


class NashController(DeepController):
    kind = "opndqn"

    def __init__(self, network, cfg, rng):
        super().__init__(cfg, rng)
        self.agents = build_nash_agents(network, 4 * cfg.observed_cells, rng, cfg.replay_capacity)

    def act(self, obs, queues):
        eps = self.epsilon if self.training else 0.0
        if self.training:
            self.decisions += 1
        return fictitious_game(self.agents, obs, eps, self.rng, self.cfg.j_max)

    def observe(self, obs, actions, rewards, next_obs, queues, next_queues):
        joint_next = np.array(next_obs, dtype=np.float64)
        for agent in self.agents:
            nb = tuple(int(actions[n]) if n >= 0 else ABSENT for n in agent.neighbor_index)
            agent.buffer.push(Experience(obs[agent.index], int(actions[agent.index]), nb,
                                         float(rewards[agent.index]) * self.cfg.reward_scale,
                                         joint_next[agent.index], joint_next))
            agent.env_steps += 1
        return self.learn()

    def learn(self):
        cfg = self.cfg
        ready = [a for a in self.agents if a.ready(cfg.batch_size, cfg.pretrain_steps)]
        if not ready:
            return None
        batches = [a.buffer.sample(cfg.batch_size, self.rng) for a in ready]
        nash = None
        if cfg.gamma > 0:
            # one batched game serves every agent's minibatch
            states = [e.joint_next_states for batch in batches for e in batch]
            nash = nash_actions(self.agents, _per_agent_batches(states), self.rng, cfg.j_max)
        losses = []
        B = cfg.batch_size
        for k, (agent, batch) in enumerate(zip(ready, batches)):
            part = None if nash is None else nash[:, k * B:(k + 1) * B]
            losses.append(train_step(self.agents, agent.index, batch, cfg.gamma, self.rng, cfg.j_max,
                                     cfg.learning_rate, cfg.rms_decay, cfg.rms_eps,
                                     cfg.target_update_interval, part))
        return float(np.mean(losses))
