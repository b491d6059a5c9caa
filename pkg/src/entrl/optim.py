"""Critic-free policy optimization on grouped rollouts.

For each prompt a group of G rollouts is scored, and advantages are the
group-normalized rewards (population statistics, no learned baseline).
Each rollout contributes through a sequence-level, length-normalized
importance ratio

    s_i = exp( (1/|y_i|) * sum_t (new_logp_t - old_logp_t) )

and the objective is the clipped surrogate

    J = mean_groups (1/G) sum_i min( s_i * A_i,  clip(s_i, 1-eps_low, 1+eps_high) * A_i ).

The clip band is asymmetric and deliberately tight; once a term is clipped
it is constant in the parameters and contributes zero gradient, so later
passes over the same batch cannot push a sequence further.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "OptimConfig",
    "TokenLogProbs",
    "GroupMember",
    "RolloutGroup",
    "group_advantages",
    "seq_importance_ratio",
    "clipped_term",
    "surrogate_objective",
    "policy_update_step",
]


@dataclass(frozen=True)
class OptimConfig:
    """Optimization constants.

    ``group_size`` is G, the rollouts per prompt.  ``mini_batch_size`` times
    ``updates_per_batch`` prompts form one outer-step batch, replayed as
    ``updates_per_batch`` shuffled mini-batch passes.  ``learning_rate`` may
    be 0, which makes updates a no-op.
    """

    group_size: int = 16
    eps_low: float = 3e-4
    eps_high: float = 4e-4
    learning_rate: float = 0.05
    mini_batch_size: int = 8
    updates_per_batch: int = 4
    std_floor: float = 1e-6

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        for name in ("eps_low", "eps_high"):
            eps = getattr(self, name)
            if not 0.0 < eps < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {eps}")
        if self.learning_rate < 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.mini_batch_size < 1 or self.updates_per_batch < 1:
            raise ValueError("mini_batch_size and updates_per_batch must be >= 1")
        if self.std_floor <= 0.0:
            raise ValueError(f"std_floor must be positive, got {self.std_floor}")


@dataclass
class TokenLogProbs:
    """Per-token log-probabilities of one sampled sequence.

    ``old_logp`` is recorded under the frozen snapshot that sampled the
    sequence and never changes; ``new_logp`` is recomputed under the current
    parameters by update passes and is None until then.
    """

    tokens: tuple[int, ...]
    old_logp: np.ndarray
    new_logp: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.tokens = tuple(int(t) for t in self.tokens)
        self.old_logp = np.asarray(self.old_logp, dtype=float)
        if not self.tokens:
            raise ValueError("empty token sequence")
        if self.old_logp.shape != (len(self.tokens),):
            raise ValueError(
                f"old_logp shape {self.old_logp.shape} != ({len(self.tokens)},)"
            )
        if np.any(self.old_logp > 0.0):
            raise ValueError("log-probabilities must be <= 0")
        if self.new_logp is not None:
            self.new_logp = np.asarray(self.new_logp, dtype=float)
            if self.new_logp.shape != self.old_logp.shape:
                raise ValueError("new_logp shape mismatch")
            if np.any(self.new_logp > 0.0):
                raise ValueError("log-probabilities must be <= 0")


@dataclass
class GroupMember:
    """One rollout: its token log-probs and scalar reward."""

    logps: TokenLogProbs
    reward: float


@dataclass
class RolloutGroup:
    """G rollouts for one prompt, plus advantages once computed.

    ``snapshot_version`` records which policy snapshot sampled the group so
    stale rollouts can be rejected; None disables the check.
    """

    prompt_id: str
    members: list[GroupMember]
    advantages: np.ndarray | None = None
    snapshot_version: int | None = None

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("group has no members")
        if self.advantages is not None:
            self.advantages = np.asarray(self.advantages, dtype=float)
            if self.advantages.shape != (len(self.members),):
                raise ValueError("advantages length != member count")


def group_advantages(rewards, std_floor: float = 1e-6) -> np.ndarray:
    """Normalize a group's rewards to zero mean and unit population std.

    Uses the population standard deviation (divide by G).  A degenerate
    group, std below ``std_floor``, yields all-zero advantages: identical
    rewards carry no preference signal and are skipped rather than amplified.
    """
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1:
        raise ValueError(f"rewards must be 1-d, got shape {r.shape}")
    if r.size < 2:
        raise ValueError(f"need at least 2 rewards to normalize, got {r.size}")
    std = float(r.std())
    if std < std_floor:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def seq_importance_ratio(logps: TokenLogProbs) -> float:
    """Length-normalized sequence ratio exp(mean(new_logp - old_logp)).

    Working in log space first keeps long sequences from under/overflowing;
    the 1/|y| normalization makes the ratio comparable across lengths.
    Identical log-probs give exactly 1.0.
    """
    if logps.new_logp is None:
        raise ValueError("new_logp not computed for this sequence")
    return float(np.exp(np.mean(logps.new_logp - logps.old_logp)))


def clipped_term(s: float, advantage: float, eps_low: float, eps_high: float) -> float:
    """One rollout's surrogate term min(s*A, clip(s, 1-eps_low, 1+eps_high)*A)."""
    clipped_s = min(max(s, 1.0 - eps_low), 1.0 + eps_high)
    return min(s * advantage, clipped_s * advantage)


def surrogate_objective(groups: list[RolloutGroup], config: OptimConfig) -> float:
    """Mean over groups of the per-group mean clipped term.

    Every group must already carry advantages and current-parameter
    log-probabilities.  At unchanged parameters all ratios are 1 and the
    objective is exactly the mean advantage, i.e. 0 for full groups.
    """
    if not groups:
        raise ValueError("no groups")
    total = 0.0
    for grp in groups:
        if grp.advantages is None:
            raise ValueError(f"group {grp.prompt_id!r} has no advantages")
        acc = 0.0
        for member, adv in zip(grp.members, grp.advantages):
            s = seq_importance_ratio(member.logps)
            acc += clipped_term(s, float(adv), config.eps_low, config.eps_high)
        total += acc / len(grp.members)
    return total / len(groups)


def _refresh_new_logps(policy, groups: list[RolloutGroup]) -> None:
    for grp in groups:
        for member in grp.members:
            member.logps.new_logp = policy.token_logps(grp.prompt_id, member.logps.tokens)


def policy_update_step(
    policy,
    groups: list[RolloutGroup],
    config: OptimConfig,
    rng: np.random.Generator | None = None,
) -> float:
    """Run one outer optimization step over a batch of groups.

    The groups are shuffled and split into ``config.updates_per_batch``
    mini-batches; each mini-batch takes one gradient-ascent step on the
    clipped surrogate.  The gradient of an unclipped-active term is

        A_i * s_i * (1/|y_i|) * sum_t grad log pi(y_t | state_t)

    and a clipped-active term contributes nothing.  ``policy`` must expose
    ``snapshot_version``, ``token_logps(prompt_id, tokens)``, ``new_grad()``,
    ``accumulate_score_grad(prompt_id, tokens, coeff, grad)`` and
    ``apply_gradient(grad, learning_rate)``.

    Returns the surrogate objective evaluated after the last mini-batch,
    with every member's ``new_logp`` refreshed under the final parameters.
    Raises if any group was sampled under a different policy snapshot.
    """
    if not groups:
        raise ValueError("no groups")
    for grp in groups:
        if grp.advantages is None:
            raise ValueError(f"group {grp.prompt_id!r} has no advantages")
        if grp.snapshot_version is not None and grp.snapshot_version != policy.snapshot_version:
            raise ValueError(
                f"stale rollouts: group {grp.prompt_id!r} sampled under snapshot "
                f"{grp.snapshot_version}, policy is at {policy.snapshot_version}"
            )
    if rng is None:
        rng = np.random.default_rng(0)

    order = rng.permutation(len(groups))
    for chunk in np.array_split(order, config.updates_per_batch):
        if chunk.size == 0:
            continue
        grad = policy.new_grad()
        for idx in chunk:
            grp = groups[int(idx)]
            for member, adv in zip(grp.members, grp.advantages):
                adv = float(adv)
                if adv == 0.0:
                    continue
                lp = member.logps
                lp.new_logp = policy.token_logps(grp.prompt_id, lp.tokens)
                s = seq_importance_ratio(lp)
                clipped_s = min(max(s, 1.0 - config.eps_low), 1.0 + config.eps_high)
                if s * adv <= clipped_s * adv:
                    coeff = adv * s / (len(lp.tokens) * len(grp.members) * chunk.size)
                    policy.accumulate_score_grad(grp.prompt_id, lp.tokens, coeff, grad)
        policy.apply_gradient(grad, config.learning_rate)

    _refresh_new_logps(policy, groups)
    return surrogate_objective(groups, config)
