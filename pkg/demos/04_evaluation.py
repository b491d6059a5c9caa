"""
Evaluation estimators: pass@k, entity accuracy, chrF
====================================================

pass@k answers "would one of k fresh samples have been correct?" without
bias, from n >= k recorded samples per problem.  Entity accuracy counts
matches regardless of gate outcomes.  chrF scores surface similarity from
character n-grams, so near-misses earn partial credit.
"""

from entrl import (
    GoldEntitySet,
    PassAtKInput,
    RewardConfig,
    chrf,
    compute_reward,
    entity_accuracy,
    pass_at_k_curve,
    pass_at_k_single,
)

# A problem with 5 of 16 samples correct: one draw usually misses, a
# 16-sample budget almost surely hits.
print("pass@k for n=16, c=5:")
for k in (1, 2, 4, 8, 16):
    print(f"  k={k:<3} {pass_at_k_single(16, 5, k):.4f}")

# Curves average per-problem estimates.  pass@1 equals the plain mean rate.
batch = PassAtKInput(n=16, counts=(5, 0, 16, 2), ks=(1, 4, 16))
curve = pass_at_k_curve(batch)
print("\nbatch curve:", {k: round(v, 4) for k, v in zip(curve.ks, curve.estimates)})

# Entity accuracy over scored responses: the match bit survives gate
# failures, so a correct but overlong answer still counts here.
gold = GoldEntitySet("station", ("Gare du Nord",))
config = RewardConfig()
responses = [
    "<think> Paris terminus </think> gare du nord",
    "<think> hmm </think> gare de lyon",
    "<think> pad </think> gare du nord " + "x" * 40,
]
breakdowns = [compute_reward(r, gold, [12], config) for r in responses]
print(f"\nentity accuracy: {entity_accuracy(breakdowns):.1f}%  "
      f"(rewards: {[b.reward for b in breakdowns]})")

# chrF: identical strings score 100, disjoint strings 0, and a close
# hypothesis lands in between.
print(f"\nchrf identity:  {chrf('gare du nord', 'gare du nord'):.1f}")
print(f"chrf disjoint:  {chrf('abc', 'xyz'):.1f}")
print(f"chrf near miss: {chrf('gare du nord', 'gare du nort'):.1f}")
