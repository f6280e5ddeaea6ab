"""Walk one brand-persona cell through the four-step remix with the mock backend.

    python demos/remix_walkthrough.py [BRAND] [PERSONA]
"""
import sys
from importlib import resources

from quoteremix.config import Config, load_roster
from quoteremix.gateway import Gateway, load_mock_fixtures
from quoteremix.remix import build_remix_prompt, check_slogan, run_remix

brand_name = sys.argv[1] if len(sys.argv) > 1 else "DKNY"
persona_label = sys.argv[2] if len(sys.argv) > 2 else "Anticipation"
roster = load_roster()
brand, persona = roster.brand(brand_name), roster.persona(persona_label)
config = Config()

print(build_remix_prompt(brand, persona).rendered)
print("-" * 60)

backend = load_mock_fixtures(resources.files("quoteremix.data") / "mock_fixtures.json")
slogan = run_remix(brand, persona, Gateway(backend), config)
trace = slogan.trace

print("quotes:")
for q in trace.matched_quotes:
    star = "*" if q == trace.starred_quote else " "
    print(f"  {star} {q.text}  ({q.author})")
print("segments:", " | ".join(f"[{s.text}]" if s.editable else s.text
                              for s in trace.segmentation.segments))
for r in trace.replacements:
    print(f"  {r.original!r} -> {r.replacement!r}")

report = check_slogan(trace.starred_quote.text, slogan.text, brand, config.remix)
print(f"edit count {report.edit_count}, overall {report.overall}")
print(f"slogan: {slogan.text}")
