"""Generate, judge and report a four-brand grid against the mock backend.

Writes into a temporary directory, or the one given as the first argument.
"""
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

from quoteremix.config import Config, MethodSpec, Roster, load_roster
from quoteremix.gateway import Gateway, load_mock_fixtures
from quoteremix.harness import RunDir, emit_report, evaluate_run, run_grid

runs = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="demo_runs_"))
full = load_roster()
roster = Roster(tuple(full.brand(n) for n in ("DKNY", "Orgain", "GE", "Apple")), full.personas)
config = Config(n=3, methods=[MethodSpec("ours", "remix"), MethodSpec("gpt4o", "baseline", "gpt-4o")])

backend = load_mock_fixtures(resources.files("quoteremix.data") / "mock_fixtures.json")
gw = Gateway(backend, cache_dir=runs / "cache")

start = time.perf_counter()
manifest = run_grid(roster, config, gw, runs, "demo")
print(f"generated {manifest.counts()} (skipped {manifest.skipped}) in {time.perf_counter() - start:.1f}s")
report = evaluate_run(runs, "demo", gw)
out = RunDir(runs, "demo").report
emit_report(report, out)
print((out / "table3.md").read_text())
print(f"reports in {out}")
