"""Group-relative policy optimization math, verified exactly.

The objective over a group of G trajectories is

    J = (1/G) * sum_i (1 / M_i) * sum_{t masked} min(r_t * A_i,
            clip(r_t, 1 - eps, 1 + eps) * A_i)  -  kl_coeff * KL

with r_t = exp(logp_new - logp_old), M_i the number of masked-in tokens of
trajectory i, and A_i the group-standardized reward. Environment feedback
tokens carry mask 0 and contribute exactly nothing: the code never reads
their log-probabilities.

A tiny tabular softmax policy plus a swap-only miniature puzzle supply real
rollouts so the analytic gradient can be checked against central finite
differences to machine-level agreement.
"""

import json
import math
import random
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, EmptyMask, SchemaError
from .rewards import RewardConfig, total_reward

GROUPBATCH_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GrpoConfig:
    clip_eps: float = 0.2
    kl_coeff: float = 0.0
    std_floor: float = 1e-6
    group_size: int = 8

    def __post_init__(self):
        if not 0 < self.clip_eps < 1:
            raise ConfigError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if self.kl_coeff < 0:
            raise ConfigError(f"kl_coeff must be >= 0, got {self.kl_coeff}")
        if self.std_floor <= 0:
            raise ConfigError("std_floor must be > 0")
        if self.group_size < 1:
            raise ConfigError("group_size must be >= 1")


@dataclass
class TrajectoryTokens:
    """One trajectory's token-level record.

    mask[t] = 1 for policy-generated tokens, 0 for environment tokens;
    contexts[t] is the conditioning context id used at step t (needed to
    recompute logp_new under a new policy)."""

    tokens: np.ndarray
    contexts: np.ndarray
    mask: np.ndarray
    logp_new: np.ndarray
    logp_old: np.ndarray
    logp_ref: np.ndarray
    reward: float

    def __post_init__(self):
        length = len(self.tokens)
        for name in ("contexts", "mask", "logp_new", "logp_old", "logp_ref"):
            if len(getattr(self, name)) != length:
                raise SchemaError(f"{name} length differs from tokens")

    def masked_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask == 1)


@dataclass
class GroupBatch:
    trajectories: List[TrajectoryTokens]

    @property
    def G(self) -> int:
        return len(self.trajectories)

    def rewards(self) -> List[float]:
        return [traj.reward for traj in self.trajectories]

    def to_json(self) -> str:
        doc = {
            "v": GROUPBATCH_SCHEMA_VERSION,
            "trajectories": [
                {
                    "tokens": traj.tokens.tolist(),
                    "contexts": traj.contexts.tolist(),
                    "mask": traj.mask.tolist(),
                    "logp_new": traj.logp_new.tolist(),
                    "logp_old": traj.logp_old.tolist(),
                    "logp_ref": traj.logp_ref.tolist(),
                    "reward": traj.reward,
                }
                for traj in self.trajectories
            ],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GroupBatch":
        try:
            doc = json.loads(text)
            if doc["v"] != GROUPBATCH_SCHEMA_VERSION:
                raise SchemaError(f"unsupported batch version {doc['v']!r}")
            trajectories = [
                TrajectoryTokens(
                    tokens=np.asarray(item["tokens"], dtype=np.int64),
                    contexts=np.asarray(item["contexts"], dtype=np.int64),
                    mask=np.asarray(item["mask"], dtype=np.int64),
                    logp_new=np.asarray(item["logp_new"], dtype=np.float64),
                    logp_old=np.asarray(item["logp_old"], dtype=np.float64),
                    logp_ref=np.asarray(item["logp_ref"], dtype=np.float64),
                    reward=float(item["reward"]),
                )
                for item in doc["trajectories"]
            ]
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise SchemaError(f"malformed group batch: {exc!r}") from exc
        return cls(trajectories=trajectories)


# --- core math --------------------------------------------------------------

def group_advantages(rewards: Sequence[float], cfg: GrpoConfig) -> np.ndarray:
    """A_i = (R_i - mean) / max(population std, std_floor)."""
    r = np.asarray(rewards, dtype=np.float64)
    centered = r - r.mean()
    return centered / max(float(r.std()), cfg.std_floor)


def clipped_surrogate(
    batch: GroupBatch, advantages: Sequence[float], cfg: GrpoConfig
) -> float:
    """Per-trajectory masked token mean of the clipped term, then group mean."""
    per_traj = []
    for traj, adv in zip(batch.trajectories, advantages):
        idx = traj.masked_indices()
        if idx.size == 0:
            raise EmptyMask("trajectory with no masked-in token")
        ratio = np.exp(traj.logp_new[idx] - traj.logp_old[idx])
        clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
        term = np.minimum(ratio * adv, clipped * adv)
        per_traj.append(float(term.mean()))
    return math.fsum(per_traj) / batch.G


def kl_penalty(batch: GroupBatch) -> float:
    """Nonnegative per-token KL estimator exp(d) - d - 1, d = logp_ref - logp_new,
    averaged with the same masked per-trajectory normalization."""
    per_traj = []
    for traj in batch.trajectories:
        idx = traj.masked_indices()
        if idx.size == 0:
            raise EmptyMask("trajectory with no masked-in token")
        delta = traj.logp_ref[idx] - traj.logp_new[idx]
        k3 = np.exp(delta) - delta - 1.0
        per_traj.append(float(k3.mean()))
    return math.fsum(per_traj) / batch.G


def grpo_objective(batch: GroupBatch, cfg: GrpoConfig) -> float:
    advantages = group_advantages(batch.rewards(), cfg)
    objective = clipped_surrogate(batch, advantages, cfg)
    if cfg.kl_coeff > 0:
        objective -= cfg.kl_coeff * kl_penalty(batch)
    return objective


# --- toy policy + miniature environment ------------------------------------

SLOTS = 4
SWAP_PAIRS: Tuple[Tuple[int, int], ...] = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
ANSWER_TOKEN = len(SWAP_PAIRS)            # 6
N_ACTIONS = len(SWAP_PAIRS) + 1           # swaps + answer
OBS_BASE = N_ACTIONS                      # 7..11 encode fixed-point counts 0..4
BOS_CONTEXT = OBS_BASE + SLOTS + 1        # 12
N_CONTEXTS = BOS_CONTEXT + 1              # any previous token, or BOS


class ToyPolicy:
    """Tabular softmax policy: logits[context, action] over N_ACTIONS tokens,
    conditioned on the previous token id (window of one)."""

    def __init__(self, params: Optional[np.ndarray] = None):
        if params is None:
            params = np.zeros((N_CONTEXTS, N_ACTIONS), dtype=np.float64)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (N_CONTEXTS, N_ACTIONS):
            raise ConfigError(
                f"params must have shape {(N_CONTEXTS, N_ACTIONS)}, got {params.shape}"
            )
        self.params = params

    @classmethod
    def random_init(cls, rng: random.Random, scale: float = 0.5) -> "ToyPolicy":
        flat = [rng.gauss(0.0, scale) for _ in range(N_CONTEXTS * N_ACTIONS)]
        return cls(np.asarray(flat).reshape(N_CONTEXTS, N_ACTIONS))

    def log_probs(self, context: int) -> np.ndarray:
        row = self.params[context]
        shifted = row - row.max()
        return shifted - math.log(np.exp(shifted).sum())

    def probs(self, context: int) -> np.ndarray:
        return np.exp(self.log_probs(context))

    def sample(self, context: int, rng: random.Random) -> int:
        u = rng.random()
        acc = 0.0
        probs = self.probs(context)
        for action, p in enumerate(probs):
            acc += p
            if u < acc:
                return action
        return N_ACTIONS - 1


def rollout_toy_episode(
    policy_old: ToyPolicy,
    policy_ref: ToyPolicy,
    rng: random.Random,
    reward_cfg: RewardConfig,
) -> TrajectoryTokens:
    """Roll one episode of the swap-only miniature puzzle.

    The state is a permutation of range(4) that starts as a uniform shuffle;
    swap tokens mutate it, the answer token ends the episode and is graded
    against the identity. After each swap the environment emits a masked-out
    observation token encoding the current fixed-point count.
    """
    state = list(range(SLOTS))
    rng.shuffle(state)
    tokens: List[int] = []
    contexts: List[int] = []
    mask: List[int] = []
    logp_old: List[float] = []
    logp_ref: List[float] = []
    context = BOS_CONTEXT
    swaps = 0
    answered = False
    while swaps < reward_cfg.step_max:
        action = policy_old.sample(context, rng)
        tokens.append(action)
        contexts.append(context)
        mask.append(1)
        logp_old.append(float(policy_old.log_probs(context)[action]))
        logp_ref.append(float(policy_ref.log_probs(context)[action]))
        if action == ANSWER_TOKEN:
            answered = True
            break
        i, j = SWAP_PAIRS[action]
        state[i], state[j] = state[j], state[i]
        swaps += 1
        obs = OBS_BASE + sum(k == v for k, v in enumerate(state))
        tokens.append(obs)
        contexts.append(action)
        mask.append(0)
        logp_old.append(0.0)
        logp_ref.append(0.0)
        context = obs
    acc = int(answered and state == list(range(SLOTS)))
    reward = total_reward(acc, 1, min(swaps, reward_cfg.step_max), reward_cfg).total
    arr = lambda xs, dtype: np.asarray(xs, dtype=dtype)
    return TrajectoryTokens(
        tokens=arr(tokens, np.int64),
        contexts=arr(contexts, np.int64),
        mask=arr(mask, np.int64),
        logp_new=arr(logp_old, np.float64).copy(),
        logp_old=arr(logp_old, np.float64),
        logp_ref=arr(logp_ref, np.float64),
        reward=reward,
    )


def rollout_group(
    policy_old: ToyPolicy,
    policy_ref: ToyPolicy,
    seed: int,
    cfg: GrpoConfig,
    reward_cfg: Optional[RewardConfig] = None,
) -> GroupBatch:
    reward_cfg = reward_cfg or RewardConfig()
    rng = random.Random(seed)
    return GroupBatch(
        trajectories=[
            rollout_toy_episode(policy_old, policy_ref, rng, reward_cfg)
            for _ in range(cfg.group_size)
        ]
    )


def refresh_logp_new(batch: GroupBatch, policy: ToyPolicy) -> None:
    """Recompute logp_new for masked tokens under the given policy."""
    for traj in batch.trajectories:
        for t in traj.masked_indices():
            traj.logp_new[t] = policy.log_probs(int(traj.contexts[t]))[
                int(traj.tokens[t])
            ]


def grpo_objective_and_gradient(
    policy: ToyPolicy, batch: GroupBatch, cfg: GrpoConfig
) -> Tuple[float, np.ndarray]:
    """Objective value and its analytic gradient w.r.t. policy.params.

    The min/clip branches follow standard autodiff semantics: the selected
    branch carries the gradient, and a clipped branch contributes zero.
    """
    refresh_logp_new(batch, policy)
    advantages = group_advantages(batch.rewards(), cfg)
    grad = np.zeros_like(policy.params)
    per_traj_obj: List[float] = []
    per_traj_kl: List[float] = []
    G = batch.G
    lo, hi = 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps
    for traj, adv in zip(batch.trajectories, advantages):
        idx = traj.masked_indices()
        if idx.size == 0:
            raise EmptyMask("trajectory with no masked-in token")
        M = idx.size
        terms = []
        kl_terms = []
        for t in idx:
            context = int(traj.contexts[t])
            token = int(traj.tokens[t])
            l_new = float(policy.log_probs(context)[token])
            ratio = math.exp(l_new - float(traj.logp_old[t]))
            unclipped = ratio * adv
            clipped = min(max(ratio, lo), hi) * adv
            terms.append(min(unclipped, clipped))
            # d(term)/d(l_new): the unclipped branch (or an inactive clip)
            # differentiates to ratio * adv; an active clipped branch is flat.
            if unclipped <= clipped or lo < ratio < hi:
                dterm_dl = ratio * adv
            else:
                dterm_dl = 0.0
            g = dterm_dl / (G * M)
            if cfg.kl_coeff > 0:
                delta = float(traj.logp_ref[t]) - l_new
                kl_terms.append(math.exp(delta) - delta - 1.0)
                # d(k3)/d(l_new) = 1 - exp(delta); objective subtracts it.
                g -= cfg.kl_coeff * (1.0 - math.exp(delta)) / (G * M)
            if g != 0.0:
                probs = policy.probs(context)
                grad[context] -= g * probs
                grad[context, token] += g
        per_traj_obj.append(math.fsum(terms) / M)
        if cfg.kl_coeff > 0:
            per_traj_kl.append(math.fsum(kl_terms) / M)
    objective = math.fsum(per_traj_obj) / G
    if cfg.kl_coeff > 0:
        objective -= cfg.kl_coeff * (math.fsum(per_traj_kl) / G)
    return objective, grad


def finite_difference_gradient(
    policy: ToyPolicy, batch: GroupBatch, cfg: GrpoConfig, h: float = 1e-5
) -> np.ndarray:
    """Central-difference oracle over every parameter."""
    base = policy.params.copy()
    grad = np.zeros_like(base)
    for c in range(base.shape[0]):
        for v in range(base.shape[1]):
            plus = base.copy()
            plus[c, v] += h
            minus = base.copy()
            minus[c, v] -= h
            j_plus = grpo_objective_eval(ToyPolicy(plus), batch, cfg)
            j_minus = grpo_objective_eval(ToyPolicy(minus), batch, cfg)
            grad[c, v] = (j_plus - j_minus) / (2 * h)
    return grad


def grpo_objective_eval(policy: ToyPolicy, batch: GroupBatch, cfg: GrpoConfig) -> float:
    refresh_logp_new(batch, policy)
    return grpo_objective(batch, cfg)


def gradient_check(
    seed: int,
    cfg: Optional[GrpoConfig] = None,
    h: float = 1e-5,
    perturbation: float = 0.1,
    kl_coeff: Optional[float] = None,
    inject_bug: bool = False,
) -> float:
    """Max relative error between analytic and finite-difference gradients
    for one seeded rollout; relative to the gradient's own magnitude.

    inject_bug corrupts the analytic gradient before comparison — a negative
    control proving the check would catch a wrong derivative."""
    cfg = cfg or GrpoConfig()
    if kl_coeff is not None:
        cfg = GrpoConfig(
            clip_eps=cfg.clip_eps,
            kl_coeff=kl_coeff,
            std_floor=cfg.std_floor,
            group_size=cfg.group_size,
        )
    rng = random.Random(seed)
    policy_old = ToyPolicy.random_init(rng, scale=0.5)
    policy_ref = ToyPolicy.random_init(rng, scale=0.5)
    batch = rollout_group(policy_old, policy_ref, seed=seed * 7919 + 1, cfg=cfg)
    # Evaluate at a slightly moved policy so ratios differ from 1 and some
    # tokens actually clip.
    moved = policy_old.params + np.asarray(
        [rng.gauss(0.0, perturbation) for _ in range(policy_old.params.size)]
    ).reshape(policy_old.params.shape)
    policy_new = ToyPolicy(moved)
    _, analytic = grpo_objective_and_gradient(policy_new, batch, cfg)
    numeric = finite_difference_gradient(policy_new, batch, cfg, h=h)
    scale = max(float(np.abs(numeric).max()), 1e-12)
    if inject_bug:
        analytic = analytic + 0.01 * (scale + 1.0)
    return float(np.abs(analytic - numeric).max()) / scale
