"""Clipped-surrogate PPO on a small tanh MLP with hand-written backprop.

The policy and value heads share a two-layer trunk. All parameters live in
one flat float64 vector; the per-layer arrays are views into it, so the
optimizer, gradient clipping and checkpointing operate on a single array.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

N_ACTIONS = 4
ADV_EPS = 1e-8


@dataclass(frozen=True)
class PPOConfig:
    discount_gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    learning_rate: float = 3e-4
    rollout_length: int = 2048
    update_epochs: int = 10
    minibatch_size: int = 64
    value_coeff: float = 0.5
    entropy_coeff: float = 0.01
    max_grad_norm: float = 0.5
    total_env_steps: int = 300_000
    rng_seed: int = 0
    hidden_sizes: tuple = (64, 64)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not (0 <= self.discount_gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("discount_gamma and gae_lambda must lie in [0, 1]")
        if not self.clip_epsilon > 0:
            raise ValueError("clip_epsilon must be positive")
        if self.rollout_length < 1 or self.minibatch_size < 1 or self.update_epochs < 1:
            raise ValueError("rollout_length, minibatch_size and update_epochs must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


class PolicyParams:
    """Flat parameter vector with named layer views.

    Layers: ``W0, b0, W1, b1`` (trunk), ``Wpi, bpi`` (logits), ``Wv, bv`` (value).
    """

    def __init__(self, obs_dim: int, hidden_sizes=(64, 64), n_actions: int = N_ACTIONS,
                 flat: Optional[np.ndarray] = None):
        self.obs_dim = int(obs_dim)
        self.hidden_sizes = tuple(hidden_sizes)
        self.n_actions = n_actions
        shapes = []
        fan_in = self.obs_dim
        for k, h in enumerate(self.hidden_sizes):
            shapes += [(f"W{k}", (fan_in, h)), (f"b{k}", (h,))]
            fan_in = h
        shapes += [("Wpi", (fan_in, n_actions)), ("bpi", (n_actions,)),
                   ("Wv", (fan_in, 1)), ("bv", (1,))]
        self.shapes = shapes
        size = sum(int(np.prod(s)) for _, s in shapes)
        if flat is None:
            flat = np.zeros(size, dtype=np.float64)
        elif flat.shape != (size,):
            raise ValueError(f"expected {size} parameters, got {flat.shape}")
        self.flat = flat
        self.views = self._views(flat)

    def _views(self, flat):
        views = {}
        offset = 0
        for name, shape in self.shapes:
            n = int(np.prod(shape))
            views[name] = flat[offset:offset + n].reshape(shape)
            offset += n
        return views

    def __getitem__(self, name):
        return self.views[name]

    @property
    def size(self) -> int:
        return self.flat.size

    def slices(self):
        """``name -> slice`` into the flat vector."""
        out = {}
        offset = 0
        for name, shape in self.shapes:
            n = int(np.prod(shape))
            out[name] = slice(offset, offset + n)
            offset += n
        return out

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.obs_dim, self.hidden_sizes, self.n_actions, self.flat.copy())

    def with_flat(self, flat: np.ndarray) -> "PolicyParams":
        return PolicyParams(self.obs_dim, self.hidden_sizes, self.n_actions, flat)


def _orthogonal(rng, shape, gain):
    a = rng.standard_normal(shape)
    transpose = shape[0] < shape[1]
    if transpose:
        a = a.T
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if transpose:
        q = q.T
    return gain * q


def init_params(obs_dim: int, rng: np.random.Generator, hidden_sizes=(64, 64)) -> PolicyParams:
    p = PolicyParams(obs_dim, hidden_sizes)
    for k in range(len(hidden_sizes)):
        W = p[f"W{k}"]
        W[...] = _orthogonal(rng, W.shape, math.sqrt(2.0))
    p["Wpi"][...] = _orthogonal(rng, p["Wpi"].shape, 0.01)
    p["Wv"][...] = _orthogonal(rng, p["Wv"].shape, 1.0)
    return p


# ---------------------------------------------------------------------------
# forward / backward

def policy_forward(params: PolicyParams, obs):
    """Logits and value for one observation or a batch (rows)."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != params.obs_dim:
        raise ValueError(f"observation length {obs.shape[-1]} != network input {params.obs_dim}")
    h = obs
    v = params.views
    for k in range(len(params.hidden_sizes)):
        h = np.tanh(h @ v[f"W{k}"] + v[f"b{k}"])
    logits = h @ v["Wpi"] + v["bpi"]
    value = h @ v["Wv"] + v["bv"]
    return logits, value[..., 0]


def _forward_cache(params: PolicyParams, obs: np.ndarray):
    v = params.views
    acts = [obs]
    h = obs
    for k in range(len(params.hidden_sizes)):
        h = np.tanh(h @ v[f"W{k}"] + v[f"b{k}"])
        acts.append(h)
    logits = h @ v["Wpi"] + v["bpi"]
    value = (h @ v["Wv"] + v["bv"])[:, 0]
    return acts, logits, value


def _backward(params: PolicyParams, acts, dlogits, dvalue, grad: np.ndarray) -> np.ndarray:
    v = params.views
    g = params._views(grad)
    h = acts[-1]
    g["Wpi"][...] = h.T @ dlogits
    g["bpi"][...] = dlogits.sum(axis=0)
    g["Wv"][...] = h.T @ dvalue[:, None]
    g["bv"][...] = dvalue.sum()
    dh = dlogits @ v["Wpi"].T + dvalue[:, None] @ v["Wv"].T
    for k in reversed(range(len(params.hidden_sizes))):
        h = acts[k + 1]
        dz = dh * (1.0 - h * h)
        g[f"W{k}"][...] = acts[k].T @ dz
        g[f"b{k}"][...] = dz.sum(axis=0)
        if k > 0:
            dh = dz @ v[f"W{k}"].T
    return grad


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def entropy(logits):
    lp = log_softmax(logits)
    return -(np.exp(lp) * lp).sum(axis=-1)


def sample_action(logits, rng: np.random.Generator):
    """Categorical draw; returns ``(action, log_probability)``."""
    lp = log_softmax(logits)
    p = np.exp(lp)
    u = rng.random()
    c = np.cumsum(p)
    a = int(np.searchsorted(c, u * c[-1], side="right"))
    a = min(a, len(p) - 1)
    return a, float(lp[a])


# ---------------------------------------------------------------------------
# losses

@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    old_logp: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


def surrogate_terms(ratio, adv, eps):
    """Elementwise unclipped term, clipped term and their minimum."""
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    return unclipped, clipped, np.minimum(unclipped, clipped)


def ppo_loss(params: PolicyParams, batch: Batch, cfg: PPOConfig, want_grad: bool = True,
             grad_out: Optional[np.ndarray] = None):
    """Loss to minimize: ``-surrogate + value_coeff * mse - entropy_coeff * entropy``.

    Returns ``(loss, stats, grad)``; ``grad`` is ``None`` without ``want_grad``.
    """
    n = batch.obs.shape[0]
    acts, logits, value = _forward_cache(params, batch.obs)
    lp = log_softmax(logits)
    p = np.exp(lp)
    idx = np.arange(n)
    logp = lp[idx, batch.actions]
    ratio = np.exp(logp - batch.old_logp)
    adv = batch.advantages
    unclipped, clipped, surr = surrogate_terms(ratio, adv, cfg.clip_epsilon)
    ent = -(p * lp).sum(axis=1)
    verr = value - batch.returns
    policy_loss = -surr.mean()
    value_loss = (verr * verr).mean()
    ent_mean = ent.mean()
    loss = policy_loss + cfg.value_coeff * value_loss - cfg.entropy_coeff * ent_mean
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(ent_mean),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_epsilon)),
    }
    if not want_grad:
        return float(loss), stats, None
    # d(-surr)/dlogp, nonzero only where the unclipped branch is the minimum
    active = unclipped <= clipped
    dlogp = np.where(active, -adv * ratio, 0.0) / n
    dlogits = -p * dlogp[:, None]
    dlogits[idx, batch.actions] += dlogp
    # d(-c * H)/dlogits = c * p * (log p + H)
    dlogits += (cfg.entropy_coeff / n) * p * (lp + ent[:, None])
    dvalue = (2.0 * cfg.value_coeff / n) * verr
    grad = grad_out if grad_out is not None else np.zeros(params.size)
    _backward(params, acts, dlogits, dvalue, grad)
    return float(loss), stats, grad


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size == 0 or np.all(adv == adv.flat[0]):
        # a constant batch carries no preference; avoid round-off residue from the mean
        return np.zeros_like(adv)
    return (adv - adv.mean()) / (adv.std() + ADV_EPS)


def gradient_check(params: PolicyParams, batch: Batch, epsilon: float = 1e-5, cfg: PPOConfig = None,
                   n_coords: int = 10, rng=None, grad_fn: Callable = None, coords=None) -> float:
    """Max relative error between the backprop gradient and central
    differences over a sample of coordinates."""
    cfg = cfg or PPOConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    if grad_fn is None:
        grad = ppo_loss(params, batch, cfg)[2]
    else:
        grad = grad_fn(params, batch, cfg)
    if coords is None:
        coords = rng.choice(params.size, size=min(n_coords, params.size), replace=False)
    worst = 0.0
    for i in coords:
        base = params.flat[i]
        params.flat[i] = base + epsilon
        lp = ppo_loss(params, batch, cfg, want_grad=False)[0]
        params.flat[i] = base - epsilon
        lm = ppo_loss(params, batch, cfg, want_grad=False)[0]
        params.flat[i] = base
        fd = (lp - lm) / (2.0 * epsilon)
        scale = max(abs(fd), abs(grad[i]), 1e-8)
        worst = max(worst, abs(fd - grad[i]) / scale)
    return worst


# ---------------------------------------------------------------------------
# advantage estimation

@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bootstrap_value: float = 0.0

    @classmethod
    def empty(cls, n: int, obs_dim: int) -> "RolloutBuffer":
        return cls(np.zeros((n, obs_dim)), np.zeros(n, dtype=np.int64), np.zeros(n), np.zeros(n),
                   np.zeros(n), np.zeros(n))

    def __len__(self):
        return len(self.rewards)


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float):
    """``(advantages, returns)`` via the backward TD-residual recursion.
    ``dones[t]`` marks that step ``t`` ended its episode."""
    r = buffer.rewards
    v = buffer.values
    d = buffer.dones
    T = len(r)
    adv = np.zeros(T)
    next_value = buffer.bootstrap_value
    next_adv = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - d[t]
        delta = r[t] + gamma * next_value * nonterminal - v[t]
        next_adv = delta + gamma * lam * nonterminal * next_adv
        adv[t] = next_adv
        next_value = v[t]
    return adv, adv + v


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, flat: np.ndarray, grad: np.ndarray) -> None:
        """Descend ``grad`` in place."""
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        flat -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class NonFiniteLoss(FloatingPointError):
    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> float:
    norm = float(np.sqrt(grad @ grad))
    if max_norm > 0 and norm > max_norm:
        grad *= max_norm / (norm + 1e-12)
    return norm


def ppo_update(params: PolicyParams, buffer: RolloutBuffer, cfg: PPOConfig, rng: np.random.Generator,
               optimizer: Optional[Adam] = None):
    """Epochs of shuffled minibatch descent on the clipped objective.

    ``params`` is updated in place and also returned with the stats.
    """
    if optimizer is None:
        optimizer = Adam(params.size, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    adv, ret = compute_gae(buffer, cfg.discount_gamma, cfg.gae_lambda)
    adv = normalize_advantages(adv)
    n = len(buffer)
    grad = np.zeros(params.size)
    agg = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_fraction": 0.0, "grad_norm": 0.0}
    count = 0
    mb = min(cfg.minibatch_size, n)
    for _ in range(cfg.update_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            batch = Batch(buffer.obs[idx], buffer.actions[idx], buffer.logp[idx], adv[idx], ret[idx])
            grad[:] = 0.0
            loss, stats, _ = ppo_loss(params, batch, cfg, grad_out=grad)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise NonFiniteLoss("non-finite PPO loss", {
                    "loss": loss, **stats, "optimizer_step": optimizer.t,
                    "max_abs_param": float(np.max(np.abs(params.flat))),
                })
            stats["grad_norm"] = clip_grad_norm(grad, cfg.max_grad_norm)
            optimizer.step(params.flat, grad)
            for k in agg:
                agg[k] += stats[k]
            count += 1
    out = {k: v / count for k, v in agg.items()}
    return params, out


# ---------------------------------------------------------------------------
# trainer

@dataclass
class TrainStats:
    env_steps: int
    mean_return: float
    success_rate: float
    mean_success_energy: float
    policy_loss: float
    value_loss: float
    entropy: float
    episodes: int

    def to_dict(self):
        return asdict(self)


@dataclass
class EpisodeRecord:
    index: int
    env_steps: int
    seed: int
    success: bool
    collided: bool
    length: int
    episode_work: float
    episode_return: float
    success_reward: Optional[float] = None

    def to_dict(self):
        return asdict(self)


class Trainer:
    """Collects fixed-length rollouts from one environment and applies PPO.

    ``episode_seed(i)`` gives the reset seed of the ``i``-th episode and
    ``configuration`` (optional) pins the layout variant for the whole run.
    """

    def __init__(self, env, cfg: PPOConfig, episode_seed: Callable[[int], int],
                 configuration: Optional[int] = None, recent_window: int = 50):
        self.env = env
        self.cfg = cfg
        self.episode_seed = episode_seed
        self.configuration = configuration
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.params = init_params(env.spec.obs_dim, self.rng, cfg.hidden_sizes)
        self.optimizer = Adam(self.params.size, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                              cfg.adam_eps)
        self.env_steps = 0
        self.episode_index = 0
        self.episodes: list = []
        self.stats: list = []
        self.recent_window = recent_window
        self._obs = None
        self._ep_return = 0.0

    def _start_episode(self):
        seed = self.episode_seed(self.episode_index)
        self._obs = self.env.reset(seed, self.configuration)
        self._ep_return = 0.0

    def collect(self) -> RolloutBuffer:
        n = self.cfg.rollout_length
        buf = RolloutBuffer.empty(n, self.params.obs_dim)
        env = self.env
        if self._obs is None or env.done:
            self._start_episode()
        params = self.params
        rng = self.rng
        for t in range(n):
            obs = self._obs
            logits, value = policy_forward(params, obs)
            a, logp = sample_action(logits, rng)
            tr = env.step(a)
            buf.obs[t] = obs
            buf.actions[t] = a
            buf.logp[t] = logp
            buf.rewards[t] = tr.reward
            buf.values[t] = value
            buf.dones[t] = 1.0 if tr.done else 0.0
            self.env_steps += 1
            self._ep_return += tr.reward
            if tr.done:
                trace = env.trace
                self.episodes.append(EpisodeRecord(
                    index=self.episode_index, env_steps=self.env_steps, seed=trace.seed,
                    success=trace.success, collided=trace.collided, length=trace.length,
                    episode_work=trace.episode_work, episode_return=self._ep_return,
                    success_reward=tr.reward if trace.success else None,
                ))
                self.episode_index += 1
                self._start_episode()
            else:
                self._obs = tr.observation
        buf.bootstrap_value = float(policy_forward(params, self._obs)[1])
        return buf

    def update(self, buf: RolloutBuffer) -> TrainStats:
        _, out = ppo_update(self.params, buf, self.cfg, self.rng, self.optimizer)
        recent = self.episodes[-self.recent_window:]
        succ = [e for e in recent if e.success]
        st = TrainStats(
            env_steps=self.env_steps,
            mean_return=float(np.mean([e.episode_return for e in recent])) if recent else 0.0,
            success_rate=len(succ) / len(recent) if recent else 0.0,
            mean_success_energy=float(np.mean([e.episode_work for e in succ])) if succ else 0.0,
            policy_loss=out["policy_loss"],
            value_loss=out["value_loss"],
            entropy=out["entropy"],
            episodes=len(self.episodes),
        )
        self.stats.append(st)
        return st

    def train(self, total_env_steps: Optional[int] = None, callback=None):
        total = self.cfg.total_env_steps if total_env_steps is None else total_env_steps
        while self.env_steps < total:
            buf = self.collect()
            st = self.update(buf)
            if callback is not None:
                callback(self, st)
        return self.stats

    # -- checkpointing ---------------------------------------------------
    def state(self) -> tuple:
        """``(header, tensors)`` capturing everything needed to resume."""
        env = self.env
        header = {
            "ppo_config": self.cfg.to_dict(),
            "obs_dim": self.params.obs_dim,
            "rng_state": self.rng.bit_generator.state,
            "env_steps": self.env_steps,
            "episode_index": self.episode_index,
            "episode_return": self._ep_return,
            "has_obs": self._obs is not None,
            "configuration": self.configuration,
            "adam_t": self.optimizer.t,
            "step_bounds": bounds_state(env.step_bounds),
            "episode_bounds": bounds_state(env.episode_bounds),
            "env": env.state_dict(),
            "episodes": [e.to_dict() for e in self.episodes],
            "stats": [s.to_dict() for s in self.stats],
        }
        tensors = {name: self.params[name] for name, _ in self.params.shapes}
        tensors["adam_m"] = self.optimizer.m
        tensors["adam_v"] = self.optimizer.v
        return header, tensors

    def load_state(self, header: dict, tensors: dict) -> None:
        if header["obs_dim"] != self.params.obs_dim:
            raise CheckpointError(
                f"checkpoint observation length {header['obs_dim']} != environment's {self.params.obs_dim}")
        for name, shape in self.params.shapes:
            if name not in tensors or tensors[name].shape != tuple(shape):
                raise CheckpointError(f"checkpoint tensor {name} missing or misshaped")
            self.params[name][...] = tensors[name]
        self.optimizer.m[:] = tensors["adam_m"]
        self.optimizer.v[:] = tensors["adam_v"]
        self.optimizer.t = int(header["adam_t"])
        self.rng.bit_generator.state = header["rng_state"]
        self.env_steps = int(header["env_steps"])
        self.episode_index = int(header["episode_index"])
        self._ep_return = float(header["episode_return"])
        self.configuration = header["configuration"]
        env = self.env
        load_bounds(env.step_bounds, header["step_bounds"])
        load_bounds(env.episode_bounds, header["episode_bounds"])
        env.load_state_dict(header["env"])
        self._obs = env.observation() if header["has_obs"] and not env.done else None
        self.episodes = [EpisodeRecord(**e) for e in header["episodes"]]
        self.stats = [TrainStats(**s) for s in header["stats"]]

    def save(self, path) -> None:
        header, tensors = self.state()
        write_checkpoint(path, header, tensors)

    def restore(self, path) -> None:
        header, tensors = read_checkpoint(path)
        self.load_state(header, tensors)

    def act(self, obs, deterministic: bool = False, rng=None):
        logits, _ = policy_forward(self.params, obs)
        if deterministic:
            return int(np.argmax(logits))
        return sample_action(logits, rng if rng is not None else self.rng)[0]


# ---------------------------------------------------------------------------
# checkpoint container
#
# layout: 8-byte magic, u32 version, u64 header length, UTF-8 JSON header,
# then the raw tensors back to back as little-endian float64. The header's
# "tensors" manifest lists name, shape and byte offset (relative to the end
# of the header) for each one.

CHECKPOINT_MAGIC = b"PUSHCKPT"
CHECKPOINT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


def bounds_state(bounds) -> dict:
    kind = "running" if hasattr(bounds, "count") else "fixed"
    d = {"kind": kind, "min_seen": bounds.min_seen, "max_seen": bounds.max_seen}
    if kind == "running":
        d["count"] = bounds.count
    return d


def load_bounds(bounds, state: dict) -> None:
    kind = "running" if hasattr(bounds, "count") else "fixed"
    if state["kind"] != kind:
        raise CheckpointError(f"checkpoint holds {state['kind']} bounds, environment uses {kind}")
    if kind == "fixed":
        if (bounds.min_seen, bounds.max_seen) != (state["min_seen"], state["max_seen"]):
            raise CheckpointError("checkpoint fixed bounds differ from the environment's")
        return
    bounds.min_seen = state["min_seen"]
    bounds.max_seen = state["max_seen"]
    bounds.count = state["count"]


def write_checkpoint(path, header: dict, tensors: dict) -> None:
    manifest = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        manifest.append({"name": name, "shape": list(a.shape), "offset": offset})
        b = a.tobytes()
        blobs.append(b)
        offset += len(b)
    head = dict(header)
    head["tensors"] = manifest
    text = json.dumps(head, sort_keys=True, allow_nan=False).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(text)))
            fh.write(text)
            for b in blobs:
                fh.write(b)
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc


def read_checkpoint(path) -> tuple:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size + hlen
    header = json.loads(data[_PREFIX.size:start].decode("utf-8"))
    tensors = {}
    for entry in header.pop("tensors"):
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        lo = start + entry["offset"]
        if lo + 8 * n > len(data):
            raise CheckpointError(f"{path}: tensor {entry['name']} runs past end of file")
        tensors[entry["name"]] = np.frombuffer(data, dtype="<f8", count=n, offset=lo).astype(np.float64).reshape(shape)
    return header, tensors
