"""Distinct-2, pairwise BLEU and Self-BLEU on a few hand-made slogan sets."""
from quoteremix.metrics import diversity_scores

SETS = {
    "remix-like": [
        "DKNY never sleeps.",
        "Stay bold, stay innovative.",
        "Something Organic is coming!",
        "The only thing we have to fear is missing GE.",
    ],
    "template-like": [
        "DKNY: made for moments of joy.",
        "DKNY: made for moments of trust.",
        "DKNY: made for moments of pride.",
        "DKNY: made for moments of fear.",
    ],
    "identical": ["Feel the joy with Dawn."] * 4,
}

print(f"{'set':<15}{'Distinct-2':>12}{'Pairwise':>10}{'Self-BLEU':>11}")
for name, texts in SETS.items():
    s = diversity_scores(texts)
    print(f"{name:<15}{s.distinct2:>12.3f}{s.pairwise_bleu:>10.3f}{s.self_bleu:>11.3f}")
