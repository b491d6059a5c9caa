"""Synthetic entity-translation environment with a tabular bigram policy.

The environment is small enough to train on one core in seconds yet keeps
the structure of the real task: a prompt names an entity, the policy emits
``<think> ... </think> translation`` as a token sequence, and the gated
reward scores the rendered text.  Each entity has a few alias token
sequences; the policy is a per-entity bigram softmax table, so latent
knowledge, format compliance, and length behavior are all directly
inspectable in the logits.

Token sequences render to text (``t07 t11`` style) and are scored by the
same reward pipeline used for real text, with token-unit lengths.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evalkit import PassAtKCurve, PassAtKInput, pass_at_k_curve
from .optim import (
    GroupMember,
    OptimConfig,
    RolloutGroup,
    TokenLogProbs,
    group_advantages,
    policy_update_step,
)
from .reward import RewardConfig, score_response
from .textnorm import GoldEntitySet, normalize

__all__ = [
    "BOS",
    "EOS",
    "THINK_OPEN",
    "THINK_CLOSE",
    "SRC_MARK",
    "FILLER",
    "N_SPECIALS",
    "Entity",
    "SyntheticLexicon",
    "gen_lexicon",
    "PolicyConfig",
    "ToyPolicy",
    "Rollout",
    "sample_rollout",
    "render_response",
    "toy_reward_config",
    "init_activation_prior",
    "measure_pass_at_k",
    "TrainMetricsRow",
    "RolloutScore",
    "TrainResult",
    "train",
    "metrics_to_csv",
    "save_policy",
    "load_policy",
]

BOS = 0
EOS = 1
THINK_OPEN = 2
THINK_CLOSE = 3
SRC_MARK = 4
FILLER = 5
N_SPECIALS = 5

# Substream tags: every random decision derives its generator from
# (seed, tag, ...indices), so runs are reproducible piece by piece.
_STREAM_LEXICON = 0
_STREAM_INIT = 1
_STREAM_INIT_EVAL = 2
_STREAM_PROMPTS = 3
_STREAM_ROLLOUT = 4
_STREAM_SHUFFLE = 5
_STREAM_EVAL = 6


@dataclass(frozen=True)
class Entity:
    entity_id: str
    source_token: int
    aliases: tuple[tuple[int, ...], ...]
    canonical_ref: tuple[int, ...]


@dataclass(frozen=True)
class SyntheticLexicon:
    """Vocabulary, entities with alias token sequences, and the entity split.

    Token ids below ``N_SPECIALS`` are reserved (bos, eos, think markers,
    source marker); ``FILLER`` is a content token reserved for think-segment
    padding and never appears in aliases.
    """

    vocab_size: int
    entities: tuple[Entity, ...]
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.vocab_size <= FILLER + 1:
            raise ValueError(f"vocab_size {self.vocab_size} leaves no alias tokens")
        ids = [e.entity_id for e in self.entities]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate entity ids")
        if set(self.train_ids) & set(self.test_ids):
            raise ValueError("train/test splits overlap")
        if set(self.train_ids) | set(self.test_ids) != set(ids):
            raise ValueError("splits do not cover the entity set")
        for ent in self.entities:
            for alias in ent.aliases:
                if not alias:
                    raise ValueError(f"{ent.entity_id}: empty alias")
                if any(t <= FILLER or t >= self.vocab_size for t in alias):
                    raise ValueError(f"{ent.entity_id}: alias uses reserved tokens")

    def entity(self, entity_id: str) -> Entity:
        for ent in self.entities:
            if ent.entity_id == entity_id:
                return ent
        raise ValueError(f"unknown entity_id {entity_id!r}")

    def token_text(self, token: int) -> str:
        width = len(str(self.vocab_size - 1))
        return f"t{token:0{width}d}"

    def alias_text(self, alias: tuple[int, ...]) -> str:
        return " ".join(self.token_text(t) for t in alias)

    def gold(self, entity_id: str) -> GoldEntitySet:
        ent = self.entity(entity_id)
        return GoldEntitySet(entity_id, tuple(self.alias_text(a) for a in ent.aliases))

    def ref_lengths(self, entity_id: str) -> list[int]:
        return [len(self.entity(entity_id).canonical_ref)]

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "specials": {
                "bos": BOS,
                "eos": EOS,
                "think_open": THINK_OPEN,
                "think_close": THINK_CLOSE,
                "src_mark": SRC_MARK,
                "filler": FILLER,
            },
            "entities": [
                {
                    "entity_id": e.entity_id,
                    "source_token": e.source_token,
                    "aliases": [list(a) for a in e.aliases],
                    "canonical_ref": list(e.canonical_ref),
                }
                for e in self.entities
            ],
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticLexicon":
        entities = tuple(
            Entity(
                entity_id=e["entity_id"],
                source_token=int(e["source_token"]),
                aliases=tuple(tuple(int(t) for t in a) for a in e["aliases"]),
                canonical_ref=tuple(int(t) for t in e["canonical_ref"]),
            )
            for e in doc["entities"]
        )
        return cls(
            vocab_size=int(doc["vocab_size"]),
            entities=entities,
            train_ids=tuple(doc["train_ids"]),
            test_ids=tuple(doc["test_ids"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SyntheticLexicon":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _contains_run(hay: tuple[int, ...], needle: tuple[int, ...]) -> bool:
    n = len(needle)
    return any(hay[i : i + n] == needle for i in range(len(hay) - n + 1))


def gen_lexicon(
    seed: int,
    n_entities: int = 20,
    aliases_per_entity: int = 3,
    alias_len_range: tuple[int, int] = (2, 4),
    train_fraction: float = 0.75,
    vocab_size: int = 48,
    ref_pad_range: tuple[int, int] = (0, 2),
) -> SyntheticLexicon:
    """Generate a seeded lexicon with disjoint train/test entity splits.

    Within one entity no token is reused across its aliases, which keeps
    the bigram chains of different aliases from interfering.  Across
    entities no alias may appear as a contiguous run inside another, so a
    match can never be ambiguous.  Collisions are regenerated internally;
    persistent failure (vocabulary too small for the request) raises.

    ``ref_pad_range`` bounds the random padding appended to the first
    alias to form the canonical reference; (0, 0) makes the length bound
    tau * mean reference length as tight as the alias itself.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if n_entities < 2:
        raise ValueError("need at least 2 entities to split")
    lo, hi = alias_len_range
    if not 1 <= lo <= hi:
        raise ValueError(f"bad alias_len_range {alias_len_range!r}")
    pad_lo, pad_hi = ref_pad_range
    if not 0 <= pad_lo <= pad_hi:
        raise ValueError(f"bad ref_pad_range {ref_pad_range!r}")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    pool = np.arange(FILLER + 1, vocab_size)
    if len(pool) < aliases_per_entity * hi:
        raise ValueError(
            f"vocab_size {vocab_size} cannot host {aliases_per_entity} aliases "
            f"of up to {hi} tokens"
        )

    rng = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_LEXICON)))
    width = len(str(n_entities - 1))
    source_tokens = rng.permutation(pool)[:n_entities]
    kept_aliases: list[tuple[int, ...]] = []
    entities: list[Entity] = []
    for i in range(n_entities):
        for attempt in range(200):
            lengths = rng.integers(lo, hi + 1, size=aliases_per_entity)
            picks = rng.permutation(pool)[: int(lengths.sum())]
            aliases, start = [], 0
            for ln in lengths:
                aliases.append(tuple(int(t) for t in picks[start : start + ln]))
                start += int(ln)
            clash = any(
                _contains_run(a, b) or _contains_run(b, a)
                for a in aliases
                for b in kept_aliases
            )
            if not clash:
                break
        else:
            raise RuntimeError(
                f"could not place aliases for entity {i} without collisions; "
                f"vocabulary too crowded"
            )
        pad = rng.integers(pad_lo, pad_hi + 1)
        ref = aliases[0] + tuple(int(t) for t in rng.choice(pool, size=pad))
        entities.append(
            Entity(
                entity_id=f"E{i:0{width}d}",
                source_token=int(source_tokens[i % len(source_tokens)]),
                aliases=tuple(aliases),
                canonical_ref=ref,
            )
        )
        kept_aliases.extend(aliases)

    order = rng.permutation(n_entities)
    n_train = int(np.clip(round(train_fraction * n_entities), 1, n_entities - 1))
    ids = [entities[int(j)].entity_id for j in order]
    return SyntheticLexicon(
        vocab_size=vocab_size,
        entities=tuple(entities),
        train_ids=tuple(sorted(ids[:n_train])),
        test_ids=tuple(sorted(ids[n_train:])),
    )


@dataclass(frozen=True)
class PolicyConfig:
    """Knobs for policy construction and its Monte Carlo verification."""

    temperature: float = 1.0
    max_len: int = 24
    eval_samples: int = 256
    pass64_floor: float = 0.70
    k_high: int = 64
    max_attempts: int = 10


def _log_softmax(rows: np.ndarray) -> np.ndarray:
    shifted = rows - rows.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class ToyPolicy:
    """Entity-conditioned bigram softmax policy.

    ``logits[entity, prev_token, next_token]`` are the live parameters;
    ``params_old`` is the frozen snapshot that sampling and importance
    ratios are measured against.  ``snapshot()`` refreshes it and bumps
    ``snapshot_version`` so stale rollouts can be detected.
    """

    def __init__(self, lexicon: SyntheticLexicon, logits: np.ndarray, temperature: float = 1.0):
        logits = np.asarray(logits, dtype=float)
        expected = (len(lexicon.entities), lexicon.vocab_size, lexicon.vocab_size)
        if logits.shape != expected:
            raise ValueError(f"logits shape {logits.shape} != {expected}")
        if temperature < 0.0:
            raise ValueError(f"temperature must be >= 0, got {temperature}")
        self.lexicon = lexicon
        self.logits = logits
        self.temperature = float(temperature)
        self.params_old = logits.copy()
        self.snapshot_version = 0
        self._entity_index = {e.entity_id: i for i, e in enumerate(lexicon.entities)}
        self._old_tables_cache: tuple | None = None

    @property
    def n_params(self) -> int:
        return self.logits.size

    def entity_index(self, entity_id: str) -> int:
        try:
            return self._entity_index[entity_id]
        except KeyError:
            raise ValueError(f"unknown entity_id {entity_id!r}") from None

    def snapshot(self) -> None:
        """Freeze the current parameters as the sampling distribution."""
        self.params_old = self.logits.copy()
        self.snapshot_version += 1
        self._old_tables_cache = None

    def _old_tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # (log-prob, cumulative-prob, entropy) tables under the snapshot;
        # rebuilt lazily once per snapshot.
        if self._old_tables_cache is None:
            if self.temperature == 0.0:
                raise ValueError("no sampling tables at temperature 0 (greedy)")
            logp = _log_softmax(self.params_old / self.temperature)
            probs = np.exp(logp)
            cum = np.cumsum(probs, axis=-1)
            ent = -(probs * logp).sum(axis=-1)
            self._old_tables_cache = (logp, cum, ent)
        return self._old_tables_cache

    def token_logps(self, entity_id: str, tokens: tuple[int, ...], old: bool = False) -> np.ndarray:
        """Per-token log-probabilities of ``tokens`` for this entity's prompt.

        ``old=True`` reads the snapshot tables (the exact values sampling
        recorded); otherwise the live parameters are used.
        """
        e = self.entity_index(entity_id)
        toks = np.asarray(tokens, dtype=int)
        prevs = np.concatenate(([BOS], toks[:-1]))
        if self.temperature == 0.0:
            table = self.params_old if old else self.logits
            best = table[e, prevs].argmax(axis=-1)
            return np.where(toks == best, 0.0, -np.inf)
        if old:
            logp_table, _, _ = self._old_tables()
            return logp_table[e, prevs, toks]
        rows = _log_softmax(self.logits[e, prevs] / self.temperature)
        return rows[np.arange(len(toks)), toks]

    def new_grad(self) -> np.ndarray:
        return np.zeros_like(self.logits)

    def accumulate_score_grad(
        self, entity_id: str, tokens: tuple[int, ...], coeff: float, grad: np.ndarray
    ) -> None:
        """Add coeff * grad of sum_t log pi(tokens_t | prev_t) into ``grad``."""
        if self.temperature <= 0.0:
            raise ValueError("gradients require positive temperature")
        e = self.entity_index(entity_id)
        toks = np.asarray(tokens, dtype=int)
        prevs = np.concatenate(([BOS], toks[:-1]))
        rows = self.logits[e, prevs] / self.temperature
        shifted = np.exp(rows - rows.max(axis=-1, keepdims=True))
        probs = shifted / shifted.sum(axis=-1, keepdims=True)
        delta = -probs
        delta[np.arange(len(toks)), toks] += 1.0
        np.add.at(grad[e], prevs, (coeff / self.temperature) * delta)

    def apply_gradient(self, grad: np.ndarray, learning_rate: float) -> None:
        if grad.shape != self.logits.shape:
            raise ValueError("gradient shape mismatch")
        self.logits += learning_rate * grad


@dataclass
class Rollout:
    """One sampled response: tokens, snapshot log-probs, and bookkeeping."""

    entity_id: str
    tokens: tuple[int, ...]
    logps: TokenLogProbs
    truncated: bool
    entropies: np.ndarray


def sample_rollout(policy: ToyPolicy, entity_id: str, max_len: int, seed) -> Rollout:
    """Sample one response from the policy's frozen snapshot.

    Generation starts after BOS, ends at EOS or after ``max_len`` tokens.
    The emitted EOS is part of the sequence and carries a log-probability;
    a sequence that never emits EOS is marked truncated.  ``seed`` may be
    an int, a SeedSequence, or a Generator.  At temperature 0 the rollout
    is the argmax trajectory and the seed is irrelevant.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    e = policy.entity_index(entity_id)
    greedy = policy.temperature == 0.0
    if greedy:
        argmax_rows = policy.params_old[e].argmax(axis=-1)
    else:
        logp_table, cum_table, ent_table = policy._old_tables()
        rng = np.random.default_rng(seed)

    tokens: list[int] = []
    logps: list[float] = []
    ents: list[float] = []
    prev = BOS
    for _ in range(max_len):
        if greedy:
            tok = int(argmax_rows[prev])
            logps.append(0.0)
            ents.append(0.0)
        else:
            row = cum_table[e, prev]
            tok = int(np.searchsorted(row, rng.random(), side="right"))
            tok = min(tok, policy.lexicon.vocab_size - 1)
            logps.append(float(logp_table[e, prev, tok]))
            ents.append(float(ent_table[e, prev]))
        tokens.append(tok)
        prev = tok
        if tok == EOS:
            break

    lp = TokenLogProbs(tuple(tokens), np.asarray(logps))
    return Rollout(entity_id, tuple(tokens), lp, truncated=tokens[-1] != EOS,
                   entropies=np.asarray(ents))


def render_response(
    lexicon: SyntheticLexicon, tokens: tuple[int, ...], config: RewardConfig | None = None
) -> str:
    """Render a token sequence to the text form the reward pipeline scores."""
    open_marker = config.open_marker if config else "<think>"
    close_marker = config.close_marker if config else "</think>"
    pieces = []
    for t in tokens:
        if t in (BOS, EOS):
            continue
        if t == THINK_OPEN:
            pieces.append(open_marker)
        elif t == THINK_CLOSE:
            pieces.append(close_marker)
        elif t == SRC_MARK:
            pieces.append("<src>")
        else:
            pieces.append(lexicon.token_text(t))
    return " ".join(pieces)


def toy_reward_config(**overrides) -> RewardConfig:
    """Reward config for the toy task: token-unit lengths, default gates."""
    params = {"length_unit": "tokens"}
    params.update(overrides)
    return RewardConfig(**params)


def measure_pass_at_k(
    policy: ToyPolicy,
    entity_ids,
    n: int,
    ks,
    seed: int,
    max_len: int = 24,
    config: RewardConfig | None = None,
) -> tuple[PassAtKCurve, tuple[int, ...]]:
    """Monte Carlo pass@k over entities: n fresh samples each, then the
    unbiased estimator.  A sample counts as correct when its parsed
    translation segment matches a gold alias; gates do not apply.

    Returns the curve and the per-entity correct counts.
    """
    if config is None:
        config = toy_reward_config()
    counts = []
    for e_idx, ent_id in enumerate(entity_ids):
        gold = policy.lexicon.gold(ent_id)
        refs = policy.lexicon.ref_lengths(ent_id)
        child_seeds = np.random.SeedSequence((seed, _STREAM_EVAL, e_idx)).spawn(n)
        correct = 0
        for child in child_seeds:
            ro = sample_rollout(policy, ent_id, max_len, child)
            raw = render_response(policy.lexicon, ro.tokens, config)
            breakdown, _ = score_response(raw, gold, refs, config)
            correct += breakdown.match
        counts.append(correct)
    curve = pass_at_k_curve(PassAtKInput(n=n, counts=tuple(counts), ks=tuple(ks)))
    return curve, tuple(counts)


@dataclass(frozen=True)
class PriorStructure:
    """Logit strengths for the structured prior.

    ``chain_strength`` sets how reliably an alias chain completes once its
    first token is chosen; lowering it makes each completion attempt risky,
    which rewards retrying and so couples translation length to match
    probability.  ``distractor_eos`` sets how fast undirected walks
    terminate; ``alias_end_eos`` sets how reliably a completed alias stops.
    """

    chain_strength: float = 6.0
    distractor_eos: float = 4.0
    alias_end_eos: float = 6.0

    def __post_init__(self) -> None:
        for name in ("chain_strength", "distractor_eos", "alias_end_eos"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")


def _structured_logits(
    lexicon: SyntheticLexicon,
    start_boosts: dict[str, float],
    noise: np.ndarray,
    structure: PriorStructure,
) -> np.ndarray:
    """Build prior logits: format skeleton strong, alias chains per
    ``structure``, alias starts weak (that is where the latent knowledge
    sits)."""
    logits = 0.3 * noise
    # Specials and the think filler are unreachable by default; structure
    # below re-opens them where they belong.
    logits[:, :, BOS] = -9.0
    logits[:, :, SRC_MARK] = -9.0
    logits[:, :, THINK_OPEN] = -9.0
    logits[:, :, THINK_CLOSE] = -9.0
    logits[:, :, FILLER] = -9.0
    # Content rows drift toward EOS; too slow a drift lets undirected walks
    # stumble into alias chains often enough to put a floor under pass@1.
    logits[:, FILLER + 1 :, EOS] = structure.distractor_eos
    for e, ent in enumerate(lexicon.entities):
        logits[e, BOS, THINK_OPEN] = 7.0
        logits[e, THINK_OPEN, FILLER] = 5.5
        logits[e, THINK_OPEN, THINK_CLOSE] = 4.0
        logits[e, FILLER, THINK_CLOSE] = 7.0
        logits[e, THINK_CLOSE, EOS] = -9.0
        boost = start_boosts[ent.entity_id]
        for alias in ent.aliases:
            logits[e, THINK_CLOSE, alias[0]] = boost
            for a, b in zip(alias, alias[1:]):
                logits[e, a, b] = structure.chain_strength
            logits[e, alias[-1], EOS] = structure.alias_end_eos
    return logits


def init_activation_prior(
    lexicon: SyntheticLexicon,
    policy_cfg: PolicyConfig,
    target_pass1_max: float,
    seed: int,
    structure: PriorStructure | None = None,
) -> ToyPolicy:
    """Construct a policy in the latent-knowledge regime and verify it.

    The format skeleton (think block, then a translation, then EOS) is
    near-deterministic, and each alias chain is easy to follow once its
    first token is chosen; only the choice of that first token is weak.
    The per-entity start logit is tuned by Monte Carlo on the train split
    until measured pass@1 <= ``target_pass1_max`` while pass@``k_high``
    stays at or above ``policy_cfg.pass64_floor``.  Raises with the
    measured rates if the regime is not reached within
    ``policy_cfg.max_attempts``.
    """
    if not 0.0 < target_pass1_max < 1.0:
        raise ValueError(f"target_pass1_max must be in (0, 1), got {target_pass1_max}")
    if policy_cfg.temperature <= 0.0:
        raise ValueError("activation prior needs a positive sampling temperature")
    if structure is None:
        structure = PriorStructure()

    rng = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_INIT)))
    shape = (len(lexicon.entities), lexicon.vocab_size, lexicon.vocab_size)
    noise = rng.normal(0.0, 1.0, size=shape)
    target_p = min(0.75 * target_pass1_max, 0.06)
    boosts = {e.entity_id: -1.0 for e in lexicon.entities}

    history = []
    for attempt in range(policy_cfg.max_attempts):
        policy = ToyPolicy(
            lexicon,
            _structured_logits(lexicon, boosts, noise, structure),
            temperature=policy_cfg.temperature,
        )
        curve, counts = measure_pass_at_k(
            policy,
            lexicon.train_ids,
            n=policy_cfg.eval_samples,
            ks=(1, policy_cfg.k_high),
            seed=int(np.random.SeedSequence((seed, _STREAM_INIT_EVAL, attempt)).generate_state(1)[0]),
            max_len=policy_cfg.max_len,
        )
        pass1, pass_high = curve.estimates
        history.append((pass1, pass_high))
        # Accept with margin so an independent measurement seed stays inside
        # the target too.
        if pass1 <= 0.9 * target_pass1_max and pass_high >= policy_cfg.pass64_floor:
            return policy
        # Nudge each entity's start logit toward the per-entity target rate.
        n = policy_cfg.eval_samples
        for ent_id, c in zip(lexicon.train_ids, counts):
            measured = max(c / n, 1.0 / (2 * n))
            step = float(np.clip(np.log(target_p / measured), -2.5, 2.5))
            boosts[ent_id] += step

    raise RuntimeError(
        f"activation prior not reached in {policy_cfg.max_attempts} attempts; "
        f"measured (pass@1, pass@{policy_cfg.k_high}) per attempt: {history!r}"
    )


@dataclass(frozen=True)
class TrainMetricsRow:
    """Per-step training metrics, one CSV row."""

    step: int
    mean_reward: float
    mean_trans_length: float
    mean_entropy: float
    pass1_eval: float


@dataclass(frozen=True)
class RolloutScore:
    """Scored final-step rollout, kept for post-run analysis."""

    entity_id: str
    fmt_gate: int
    len_gate: int
    match: int
    reward: float
    trans_len: int
    alias_occurrences: int
    truncated: bool


@dataclass
class TrainResult:
    policy: ToyPolicy
    metrics: list[TrainMetricsRow]
    final_rollouts: list[RolloutScore]


def _alias_occurrences(trans: str, gold: GoldEntitySet) -> int:
    normed = normalize(trans)
    return sum(normed.count(a) for a in gold.normalized_aliases)


def train(
    lexicon: SyntheticLexicon,
    policy: ToyPolicy,
    reward_cfg: RewardConfig,
    optim_cfg: OptimConfig,
    steps: int,
    ablation: str = "full",
    seed: int = 0,
    max_len: int = 24,
) -> TrainResult:
    """Run the group-based training loop on the toy task.

    Each outer step freezes a snapshot, samples ``mini_batch_size *
    updates_per_batch`` prompts from the train split with ``group_size``
    rollouts each, scores them under the selected ablation, normalizes
    rewards within each group, and applies the mini-batch update passes.
    Metrics row ``s`` describes the rollouts sampled at step ``s`` before
    that step's update; ``steps=0`` emits a single measurement-only row.

    Every random choice derives from ``seed`` through tagged substreams,
    so identical calls produce identical metrics and parameters.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if not lexicon.train_ids:
        raise ValueError("lexicon has no train entities")

    batch_size = optim_cfg.mini_batch_size * optim_cfg.updates_per_batch
    golds = {ent_id: lexicon.gold(ent_id) for ent_id in lexicon.train_ids}
    refs = {ent_id: lexicon.ref_lengths(ent_id) for ent_id in lexicon.train_ids}
    train_ids = np.asarray(lexicon.train_ids)

    metrics: list[TrainMetricsRow] = []
    final_rollouts: list[RolloutScore] = []

    measure_only = steps == 0
    for step in range(max(steps, 1)):
        policy.snapshot()
        prompt_rng = np.random.default_rng(
            np.random.SeedSequence((seed, _STREAM_PROMPTS, step))
        )
        batch = prompt_rng.choice(train_ids, size=batch_size, replace=True)

        groups: list[RolloutGroup] = []
        scores: list[RolloutScore] = []
        reward_sum = 0.0
        trans_len_sum = 0
        match_sum = 0
        entropy_sum = 0.0
        token_count = 0
        for p_idx, ent_id in enumerate(batch):
            ent_id = str(ent_id)
            member_seeds = np.random.SeedSequence(
                (seed, _STREAM_ROLLOUT, step, p_idx)
            ).spawn(optim_cfg.group_size)
            members: list[GroupMember] = []
            rewards = np.empty(optim_cfg.group_size)
            for m_idx, child in enumerate(member_seeds):
                ro = sample_rollout(policy, ent_id, max_len, child)
                raw = render_response(lexicon, ro.tokens, reward_cfg)
                breakdown, seg = score_response(
                    raw, golds[ent_id], refs[ent_id], reward_cfg, ablation
                )
                members.append(GroupMember(ro.logps, breakdown.reward))
                rewards[m_idx] = breakdown.reward
                trans_len = len(seg.trans.split())
                reward_sum += breakdown.reward
                trans_len_sum += trans_len
                match_sum += breakdown.match
                entropy_sum += float(ro.entropies.sum())
                token_count += len(ro.tokens)
                scores.append(
                    RolloutScore(
                        entity_id=ent_id,
                        fmt_gate=breakdown.fmt_gate,
                        len_gate=breakdown.len_gate,
                        match=breakdown.match,
                        reward=breakdown.reward,
                        trans_len=trans_len,
                        alias_occurrences=_alias_occurrences(seg.trans, golds[ent_id]),
                        truncated=ro.truncated,
                    )
                )
            advantages = group_advantages(rewards, optim_cfg.std_floor)
            groups.append(
                RolloutGroup(ent_id, members, advantages, policy.snapshot_version)
            )

        n_rollouts = batch_size * optim_cfg.group_size
        metrics.append(
            TrainMetricsRow(
                step=step,
                mean_reward=reward_sum / n_rollouts,
                mean_trans_length=trans_len_sum / n_rollouts,
                mean_entropy=entropy_sum / max(token_count, 1),
                pass1_eval=match_sum / n_rollouts,
            )
        )
        if step == max(steps, 1) - 1:
            final_rollouts = scores
        if not measure_only:
            shuffle_rng = np.random.default_rng(
                np.random.SeedSequence((seed, _STREAM_SHUFFLE, step))
            )
            policy_update_step(policy, groups, optim_cfg, rng=shuffle_rng)

    return TrainResult(policy=policy, metrics=metrics, final_rollouts=final_rollouts)


def metrics_to_csv(rows: list[TrainMetricsRow], path: str | Path) -> None:
    """Write metrics rows as CSV with a header, one row per step."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "mean_reward", "mean_trans_length", "mean_entropy", "pass1_eval"])
        for row in rows:
            writer.writerow(
                [row.step, row.mean_reward, row.mean_trans_length, row.mean_entropy, row.pass1_eval]
            )


def _lexicon_digest(lexicon: SyntheticLexicon) -> str:
    doc = json.dumps(lexicon.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(doc).hexdigest()


def save_policy(policy: ToyPolicy, path: str | Path) -> None:
    np.savez(
        path,
        logits=policy.logits,
        params_old=policy.params_old,
        temperature=np.asarray(policy.temperature),
        snapshot_version=np.asarray(policy.snapshot_version),
        lexicon_digest=np.asarray(_lexicon_digest(policy.lexicon)),
    )


def load_policy(path: str | Path, lexicon: SyntheticLexicon) -> ToyPolicy:
    with np.load(path, allow_pickle=False) as data:
        # Entity ids are positional, so only the full lexicon content
        # identifies the table's row/column meaning.
        if str(data["lexicon_digest"]) != _lexicon_digest(lexicon):
            raise ValueError("policy file does not match this lexicon")
        policy = ToyPolicy(lexicon, data["logits"], float(data["temperature"]))
        policy.params_old = np.asarray(data["params_old"], dtype=float)
        policy.snapshot_version = int(data["snapshot_version"])
    return policy
