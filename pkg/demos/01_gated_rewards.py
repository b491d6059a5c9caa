"""
Gated verifiable rewards
========================

A response earns reward only through two hard gates: it must carry exactly
one think block followed by a non-empty translation, and the translation
must stay within tau times the mean reference length.  A response that
clears both gates earns a compliance floor of alpha, plus a full unit if
the translation contains any gold alias after normalization.
"""

from entrl import GoldEntitySet, RewardConfig, compute_reward, match_entity, normalize

# Normalization lowercases, strips diacritics, and collapses whitespace,
# so alias matching ignores case, accents, and layout.
gold = GoldEntitySet("city", ("München", "Munich"))
print("normalize('  MÜNCHEN  ') ->", repr(normalize("  MÜNCHEN  ")))
print("match('går till MÜNCHEN', gold) ->", match_entity("går till MÜNCHEN", gold))
print()

config = RewardConfig()  # alpha=0.2, tau=2, character length unit
refs = [6]  # one reference translation, six characters

cases = [
    ("full credit", "<think> the Bavarian capital </think> munich"),
    ("compliance only", "<think> not sure which city </think> berlin"),
    ("format violation", "munich, but no think block"),
    ("length violation", "<think> hedging </think> munich or possibly munchen or berlin"),
]
print(f"{'case':<18} {'fmt':>3} {'len':>3} {'match':>5} {'reward':>6}")
for label, response in cases:
    b = compute_reward(response, gold, refs, config)
    print(f"{label:<18} {b.fmt_gate:>3} {b.len_gate:>3} {b.match:>5} {b.reward:>6}")

# The reward is exactly fmt * len * (alpha + match): gates multiply, they
# never average.  A matched entity behind a violated gate still reports
# match=1, which is what entity-accuracy metrics count.
