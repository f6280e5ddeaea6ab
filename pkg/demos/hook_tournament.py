"""A small hook tournament: a scripted judge that likes short slogans.

Each pair is judged twice with the slots swapped; disagreement is a tie.
"""
import re

from quoteremix.gateway import Gateway, mock_script
from quoteremix.judge import INDEX_ALIGNED, hook_score, run_tournament
from quoteremix.model import Brand, Persona, SloganCandidate, SloganSet

brand = Brand("Nike", "clothing", ("sportswear",))
persona = Persona("Pride", "confident and triumphant")

ours = ["Just do it, proudly.", "Nike: stand tall, run far.", "Victory loves Nike.",
        "Win the day with Nike!"]
theirs = ["Nike makes every step a proud moment for you.", "Nike: pride.",
          "Be proud of every mile you run in Nike shoes.", "Win the day with Nike!"]


def shorter_wins(req):
    a, b = re.findall(r"Slogan [AB]:\n(.+)", req.user_text)
    if len(a) == len(b):
        return "Answer: C\nReason: Even."
    return "Answer: A\nReason: Tighter." if len(a) < len(b) else "Answer: B\nReason: Tighter."


def slogan_set(texts, method):
    return SloganSet(brand, persona, tuple(SloganCandidate(t, brand, persona, source_method=method)
                                           for t in texts))


gw = Gateway(mock_script({"Slogan A": shorter_wins}))
tally = run_tournament(slogan_set(ours, "ours"), slogan_set(theirs, "baseline"), INDEX_ALIGNED, gw)
print(f"wins {tally.wins}, losses {tally.losses}, ties {tally.ties}, judge calls {gw.calls}")
print(f"hook score {tally.hook_score:.4f}")
print(f"hook_score(10, 5, 5) = {hook_score(10, 5, 5):.4f}")
