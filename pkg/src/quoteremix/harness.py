"""Brand x persona grid runs: generation, persistence, evaluation, reports.

Run directory layout (everything derives from the run id)::

    <runs_dir>/<run_id>/
        manifest.json          status of every (method, cell); timestamps live only here
        run_config.json        resolved config and roster, frozen at run start
        records/<method>/<brand>__<persona>.jsonl
        verdicts/binary.jsonl  fluency / faithfulness judgments
        verdicts/pairs.jsonl   hook duels, both presentation orders
        report/                emitted tables and plot series

All record files are JSON lines carrying a ``schema`` field.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Union

from . import prompts
from .config import (
    Config,
    MethodSpec,
    Roster,
    config_from_dict,
    roster_from_dict,
)
from .gateway import AuthError, ChatRequest, Gateway, atomic_write_text, cache_key
from .judge import (
    DIMENSIONS,
    FAITHFULNESS,
    FLUENCY,
    BinaryVerdict,
    TournamentTally,
    aggregate_novelty,
    aggregate_novelty_per_cell,
    binary_prompt,
    combine_orders,
    hook_prompt,
    parse_binary,
    parse_pair,
    tournament_pairs,
    OURS_FIRST,
    OURS_SECOND,
)
from .metrics import aggregate_cells, distinct2, pairwise_bleu, self_bleu
from .model import Brand, Persona, SloganCandidate, SloganSet
from .remix import CellShortfall, Discard, build_remix_prompt, generate_cell, remix_request

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PENDING, DONE, FAILED, PARTIAL = "pending", "done", "failed", "partial"

METRICS = ("distinct2", "pairwise_bleu", "self_bleu")
NOVELTY = {FLUENCY: "disfluency", FAITHFULNESS: "unfaithfulness"}
COLUMNS = (
    ("distinct2", "Distinct-2", "higher is better"),
    ("pairwise_bleu", "Pairwise BLEU", "lower is better"),
    ("self_bleu", "Self-BLEU", "lower is better"),
    ("disfluency", "Disfluency", "lower is better"),
    ("unfaithfulness", "Unfaithfulness", "lower is better"),
)


class ConfigMismatch(RuntimeError):
    pass


class InsufficientCells(RuntimeError):
    pass


class MissingVerdicts(RuntimeError):
    def __init__(self, gaps: list[str]):
        head = ", ".join(gaps[:5]) + (" ..." if len(gaps) > 5 else "")
        super().__init__(f"{len(gaps)} judgments missing: {head}")
        self.gaps = gaps


class ReportWriteError(OSError):
    pass


def cell_id(brand: Brand, persona: Persona) -> str:
    return f"{brand.name}|{persona.label}"


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-") or "x"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    run_id: str
    config_digest: str
    roster_digest: str
    template_versions: dict
    started: str = ""
    finished: str = ""
    cell_status: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION

    def status(self, method: str, cid: str) -> str:
        return self.cell_status.get(method, {}).get(cid, PENDING)

    def done_cells(self, method: str) -> list[str]:
        return [c for c, s in self.cell_status.get(method, {}).items() if s == DONE]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for cells in self.cell_status.values():
            for s in cells.values():
                out[s] = out.get(s, 0) + 1
        return out

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


class RunDir:
    def __init__(self, runs_dir: Union[str, Path], run_id: str):
        if not re.fullmatch(r"[A-Za-z0-9._-]+", run_id):
            raise ValueError(f"run id {run_id!r} is not filesystem-safe")
        self.run_id = run_id
        self.root = Path(runs_dir) / run_id

    manifest = property(lambda self: self.root / "manifest.json")
    config = property(lambda self: self.root / "run_config.json")
    report = property(lambda self: self.root / "report")
    binary_verdicts = property(lambda self: self.root / "verdicts" / "binary.jsonl")
    pair_verdicts = property(lambda self: self.root / "verdicts" / "pairs.jsonl")

    def records(self, method: str, brand: Brand, persona: Persona) -> Path:
        return self.root / "records" / _slug(method) / f"{_slug(brand.name)}__{persona.label}.jsonl"

    def exists(self) -> bool:
        return self.manifest.exists()

    def load(self) -> tuple[RunManifest, Config, Roster]:
        if not self.exists():
            raise FileNotFoundError(f"no run at {self.root}")
        snap = json.loads(self.config.read_text("utf-8"))
        return RunManifest.load(self.manifest), config_from_dict(snap["config"]), roster_from_dict(snap["roster"])


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    atomic_write_text(path, "".join(_dumps(r) + "\n" for r in rows))


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# --- generation -------------------------------------------------------------

def baseline_request(brand: Brand, persona: Persona, nonce: int, config: Config,
                     method: MethodSpec) -> ChatRequest:
    text = prompts.render(prompts.BASELINE, {"Brand": brand.name, "Persona": persona.label})
    if nonce > 0:
        text = f"{text}\nAttempt: {nonce}\n"
    return ChatRequest(user_text=text, temperature=config.temperature.generation,
                       max_output_tokens=64, model_id=method.model or config.models.generator)


def clean_baseline(text: str) -> str:
    """First non-empty line of a completion, without list markers or quotes."""
    for line in text.splitlines():
        line = re.sub(r"^\s*(?:[-*•]|\d+[.)])\s*", "", line).strip().strip("*").strip()
        line = line.strip('"“”').strip()
        if line:
            return line
    return ""


def generate_baseline_cell(brand: Brand, persona: Persona, n: int, gateway: Gateway,
                           config: Config, method: MethodSpec) -> SloganSet:
    slogans = []
    for k in range(n):
        req = baseline_request(brand, persona, config.seed_nonce_base + k, config, method)
        text = clean_baseline(gateway.complete(req).text)
        slogans.append(SloganCandidate(text, brand, persona, f"baseline:{method.name}"))
    return SloganSet(brand, persona, tuple(slogans))


def _slogan_record(method: MethodSpec, index: int, cand: SloganCandidate, key: str) -> dict:
    rec = {
        "schema": SCHEMA_VERSION, "kind": "slogan", "method": method.name,
        "brand": cand.brand.name, "persona": cand.persona.label, "index": index,
        "text": cand.text, "source_method": cand.source_method, "cache_key": key,
    }
    if cand.trace is not None:
        rec["trace"] = dataclasses.asdict(cand.trace)
    return rec


def _discard_record(method: MethodSpec, d: Discard) -> dict:
    return {"schema": SCHEMA_VERSION, "kind": "discard", "method": method.name,
            **dataclasses.asdict(d)}


def run_cell(brand: Brand, persona: Persona, method: MethodSpec, gateway: Gateway,
             config: Config) -> tuple[str, list[dict]]:
    """Generate one cell for one method; returns (status, records)."""
    discards: list[Discard] = []
    status = DONE
    if method.kind == "remix":
        try:
            sset = generate_cell(brand, persona, config.n, gateway, config,
                                 model=method.model, on_discard=discards.append)
        except CellShortfall as exc:
            sset, status = exc.partial, PARTIAL
        prompt = build_remix_prompt(brand, persona)
        keys = [cache_key(remix_request(prompt, c.trace.nonce, config, method.model))
                for c in sset.slogans]
    else:
        sset = generate_baseline_cell(brand, persona, config.n, gateway, config, method)
        keys = [cache_key(baseline_request(brand, persona, config.seed_nonce_base + k, config, method))
                for k in range(len(sset))]
    rows = [_slogan_record(method, i, c, k) for i, (c, k) in enumerate(zip(sset.slogans, keys))]
    rows += [_discard_record(method, d) for d in discards]
    return status, rows


def run_grid(roster: Roster, config: Config, gateway: Gateway, runs_dir: Union[str, Path],
             run_id: str, progress: Optional[Callable[[str, str, str], None]] = None) -> RunManifest:
    """Generate every (method, cell) of the grid, resuming a previous run of ``run_id``.

    Cells already marked done are skipped. A resumed run must use the same
    config and roster as the original.
    """
    rd = RunDir(runs_dir, run_id)
    if rd.exists():
        manifest = RunManifest.load(rd.manifest)
        if manifest.config_digest != config.digest() or manifest.roster_digest != roster.digest():
            raise ConfigMismatch(f"run {run_id} was started with a different config or roster")
    else:
        manifest = RunManifest(run_id, config.digest(), roster.digest(), prompts.versions(),
                               started=_now())
        atomic_write_text(rd.config, json.dumps(
            {"config": config.to_dict(), "roster": roster.to_dict()},
            ensure_ascii=False, indent=1, sort_keys=True))
    for m in config.methods:
        cells = manifest.cell_status.setdefault(m.name, {})
        for b, p in roster.cells():
            cells.setdefault(cell_id(b, p), PENDING)
    manifest.finished = ""
    lock = threading.Lock()

    def save():
        atomic_write_text(rd.manifest, json.dumps(dataclasses.asdict(manifest), indent=1, sort_keys=True))

    save()
    todo = [(m, b, p) for m in config.methods for b, p in roster.cells()
            if manifest.status(m.name, cell_id(b, p)) != DONE]
    skipped = sum(len(v) for v in manifest.cell_status.values()) - len(todo)
    manifest.skipped = skipped  # not persisted

    def work(item):
        method, brand, persona = item
        cid = cell_id(brand, persona)
        try:
            status, rows = run_cell(brand, persona, method, gateway, config)
            _write_jsonl(rd.records(method.name, brand, persona), rows)
        except AuthError:
            raise
        except Exception as exc:
            logger.error("cell %s / %s failed: %s", method.name, cid, exc)
            status = FAILED
        with lock:
            manifest.cell_status[method.name][cid] = status
            save()
        if progress:
            progress(method.name, cid, status)

    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            for fut in [pool.submit(work, item) for item in todo]:
                fut.result()
    else:
        for item in todo:
            work(item)
    manifest.finished = _now()
    save()
    return manifest


# --- evaluation -------------------------------------------------------------

@dataclass(frozen=True)
class Stat:
    mean: float
    std: float
    n: int

    @classmethod
    def of(cls, values) -> Optional["Stat"]:
        values = list(values)
        if not values:
            return None
        mean, std = aggregate_cells(values)
        return cls(mean, std, len(values))


@dataclass
class MetricsReport:
    methods: list
    domains: list
    per_cell: dict = field(default_factory=dict)
    per_domain: dict = field(default_factory=dict)
    overall: dict = field(default_factory=dict)
    hook: dict = field(default_factory=dict)
    hook_cells: dict = field(default_factory=dict)
    pooled_distinct2: dict = field(default_factory=dict)
    judged: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _load_sets(rd: RunDir, roster: Roster, manifest: RunManifest, method: str) -> dict[str, SloganSet]:
    sets = {}
    for b, p in roster.cells():
        cid = cell_id(b, p)
        if manifest.status(method, cid) != DONE:
            continue
        rows = sorted((r for r in _read_jsonl(rd.records(method, b, p)) if r["kind"] == "slogan"),
                      key=lambda r: r["index"])
        slogans = tuple(SloganCandidate(r["text"], b, p, r["source_method"]) for r in rows)
        sets[cid] = SloganSet(b, p, slogans)
    return sets


def _safe(fn, texts):
    try:
        return fn(texts)
    except ValueError:
        return None


def _digest(*parts: str) -> str:
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()[:20]


class _VerdictStore:
    def __init__(self, path: Path):
        self.path = path
        self.rows = {r["id"]: r for r in _read_jsonl(path)}

    def get(self, rid: str) -> Optional[dict]:
        return self.rows.get(rid)

    def add(self, row: dict) -> None:
        self.rows[row["id"]] = row
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(_dumps(row) + "\n")


def _judge_request(text: str, config: Config) -> ChatRequest:
    return ChatRequest(user_text=text, temperature=config.temperature.judging,
                       max_output_tokens=128, model_id=config.models.judge)


def evaluate_run(runs_dir: Union[str, Path], run_id: str, gateway: Optional[Gateway] = None, *,
                 metrics_only: bool = False, pairing: Optional[str] = None,
                 allow_partial: bool = True) -> MetricsReport:
    """Compute diversity, novelty and hook numbers for a persisted run.

    Judgments already on disk are reused. Without a gateway every needed
    judgment must already be persisted, otherwise :class:`MissingVerdicts`
    lists the gaps.
    """
    rd = RunDir(runs_dir, run_id)
    manifest, config, roster = rd.load()
    if not allow_partial:
        pending = {k: v for k, v in manifest.counts().items() if k != DONE}
        if pending:
            raise InsufficientCells(f"run {run_id} is incomplete: {pending}")
    pairing = pairing or config.evaluation.pairing
    tournament_pairs(1, 1, pairing)
    methods = [m.name for m in config.methods]
    domains = sorted({b.domain for b in roster.brands})
    brands = {b.name: b for b in roster.brands}
    report = MetricsReport(methods=methods, domains=domains, judged=not metrics_only)

    sets = {m: _load_sets(rd, roster, manifest, m) for m in methods}
    for m in methods:
        if not sets[m]:
            raise InsufficientCells(f"method {m!r} has no completed cells")

    # diversity
    for m in methods:
        cells = {}
        for cid, sset in sets[m].items():
            cells[cid] = {"n": len(sset), **{name: _safe(fn, sset.texts) for name, fn in
                                             (("distinct2", distinct2), ("pairwise_bleu", pairwise_bleu),
                                              ("self_bleu", self_bleu))}}
        report.per_cell[m] = cells
        pooled = [t for s in sets[m].values() for t in s.texts]
        report.pooled_distinct2[m] = _safe(distinct2, pooled)

    # novelty
    verdicts: dict[str, dict[str, dict[str, list[BinaryVerdict]]]] = {}
    if not metrics_only:
        store = _VerdictStore(rd.binary_verdicts)
        gaps = []
        for m in methods:
            verdicts[m] = {}
            for cid, sset in sets[m].items():
                verdicts[m][cid] = {d: [] for d in DIMENSIONS}
                for idx, cand in enumerate(sset.slogans):
                    for dim in DIMENSIONS:
                        rid = _digest("binary", dim, cand.brand.name, cand.persona.label, cand.text)
                        row = store.get(rid)
                        if row is None and gateway is not None:
                            text = binary_prompt(cand.brand, cand.persona, cand.text, dim)
                            raw = gateway.complete(_judge_request(text, config)).text
                            v = parse_binary(raw, dim)
                            row = {"schema": SCHEMA_VERSION, "id": rid, "dimension": dim,
                                   "brand": cand.brand.name, "persona": cand.persona.label,
                                   "slogan": cand.text, "value": v.value, "reason": v.reason,
                                   "raw": raw}
                            store.add(row)
                        if row is None:
                            gaps.append(f"{dim}:{m}:{cid}:{idx}")
                            continue
                        verdicts[m][cid][dim].append(
                            BinaryVerdict(row["value"], row["reason"], row["raw"], dim))
        if gaps:
            raise MissingVerdicts(gaps)
        for m in methods:
            for cid, by_dim in verdicts[m].items():
                for dim, vs in by_dim.items():
                    report.per_cell[m][cid][NOVELTY[dim]] = aggregate_novelty(vs)[0]

    # hook duels
    ref = config.evaluation.reference_method
    tallies: dict[str, dict[str, TournamentTally]] = {}
    if not metrics_only and ref in sets:
        store = _VerdictStore(rd.pair_verdicts)
        gaps = []
        for other in methods:
            if other == ref:
                continue
            tallies[other] = {}
            for cid in sets[ref]:
                if cid not in sets[other]:
                    continue
                ours, theirs = sets[ref][cid], sets[other][cid]
                try:
                    pairs = tournament_pairs(len(ours), len(theirs), pairing)
                except ValueError as exc:
                    report.notes.append(f"{other} {cid}: {exc}")
                    continue
                results = []
                for i, j in pairs:
                    a, b = ours.slogans[i].text, theirs.slogans[j].text
                    verdict = []
                    for order, (x, y) in ((OURS_FIRST, (a, b)), (OURS_SECOND, (b, a))):
                        rid = _digest("pair", ours.brand.name, ours.persona.label, x, y)
                        row = store.get(rid)
                        if row is None and gateway is not None:
                            raw = gateway.complete(_judge_request(
                                hook_prompt(ours.brand, ours.persona, x, y), config)).text
                            pv = parse_pair(raw, order)
                            row = {"schema": SCHEMA_VERSION, "id": rid, "brand": ours.brand.name,
                                   "persona": ours.persona.label, "slogan_a": x, "slogan_b": y,
                                   "choice": pv.choice, "reason": pv.reason, "raw": raw}
                            store.add(row)
                        if row is None:
                            gaps.append(f"pair:{other}:{cid}:{i}:{j}:{order}")
                            break
                        verdict.append(parse_pair(row["raw"], order))
                    if len(verdict) == 2:
                        results.append(combine_orders(*verdict))
                tallies[other][cid] = TournamentTally.from_results(results)
        if gaps:
            raise MissingVerdicts(gaps)

    # aggregation
    def domain_of(cid: str) -> str:
        return brands[cid.split("|", 1)[0]].domain

    columns = list(METRICS) + [NOVELTY[d] for d in DIMENSIONS]
    for m in methods:
        report.per_domain[m] = {}
        report.overall[m] = {}
        for dom in domains + [None]:
            cids = [c for c in sets[m] if dom is None or domain_of(c) == dom]
            row = {}
            for col in METRICS:
                row[col] = Stat.of(v for c in cids if (v := report.per_cell[m][c][col]) is not None)
            if not metrics_only:
                for dim in DIMENSIONS:
                    if config.evaluation.novelty_per_cell:
                        mean_std = aggregate_novelty_per_cell(verdicts[m][c][dim] for c in cids) if cids else None
                        count = len(cids)
                    else:
                        flat = [v for c in cids for v in verdicts[m][c][dim]]
                        mean_std = aggregate_novelty(flat) if flat else None
                        count = len(flat)
                    row[NOVELTY[dim]] = Stat(mean_std[0], mean_std[1], count) if mean_std else None
            if dom is None:
                report.overall[m] = row
            else:
                report.per_domain[m][dom] = row
        for col in columns:
            report.overall[m].setdefault(col, None)

    for other, by_cell in tallies.items():
        report.hook[other] = {}
        for dom in domains + ["all"]:
            total = sum((t for c, t in by_cell.items() if dom == "all" or domain_of(c) == dom),
                        TournamentTally())
            report.hook[other][dom] = {"wins": total.wins, "losses": total.losses, "ties": total.ties,
                                       "hook_score": total.hook_score, "degenerate": total.degenerate,
                                       "pairs": total.pairs}
        report.hook_cells[other] = {c: dataclasses.asdict(t) for c, t in by_cell.items()}
    return report


# --- reports ----------------------------------------------------------------

def _fmt(x: Optional[float]) -> str:
    return "" if x is None else format(x, ".12g")


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def emit_report(report: MetricsReport, out_dir: Union[str, Path]) -> list[Path]:
    """Write the headline results table, per-domain bar series and radar series.

    Files are deterministic functions of the report, so re-emitting an
    unchanged run gives byte-identical output.
    """
    out = Path(out_dir)
    files: dict[str, str] = {}

    def cell(stat: Optional[Stat], digits: int) -> str:
        if stat is None:
            return "n/a"
        return f"{stat.mean:.{digits}f} ± {stat.std:.{digits}f}"

    header = ["Model"] + [title for _, title, _ in COLUMNS] + ["cells"]
    rows = [header]
    md = ["| Model | " + " | ".join(f"{t} {'↑' if 'higher' in d else '↓'}" for _, t, d in COLUMNS) + " |",
          "|---" * (len(COLUMNS) + 1) + "|"]
    for m in report.methods:
        ov = report.overall[m]
        digits = [3, 3, 3, 2, 2]
        vals = [cell(ov.get(k), d) for (k, _, _), d in zip(COLUMNS, digits)]
        n = next((s.n for s in (ov.get(k) for k in METRICS) if s is not None), 0)
        rows.append([m] + vals + [n])
        md.append(f"| {m} | " + " | ".join(vals) + " |")
    files["table3.csv"] = _csv(rows)
    md += ["", "↑ higher is better; ↓ lower is better. Values are mean ± population std;",
           "diversity over brand-persona cells, novelty over individual slogans."]
    files["table3.md"] = "\n".join(md) + "\n"

    long_rows = [["method", "metric", "direction", "mean", "std", "n"]]
    for m in report.methods:
        for key, title, direction in COLUMNS:
            s = report.overall[m].get(key)
            if s is not None:
                long_rows.append([m, title, direction, _fmt(s.mean), _fmt(s.std), s.n])
    files["table3_values.csv"] = _csv(long_rows)

    bars = [["domain", "method", "metric", "mean", "std", "n"]]
    for dom in report.domains:
        for m in report.methods:
            row = report.per_domain[m].get(dom, {})
            for key, title, _ in COLUMNS[:3]:
                s = row.get(key)
                if s is not None:
                    bars.append([dom, m, title, _fmt(s.mean), _fmt(s.std), s.n])
    files["diversity_by_domain.csv"] = _csv(bars)

    radar = [["baseline", "domain", "wins", "losses", "ties", "hook_score"]]
    for dom in report.domains:
        radar.append(["self", dom, "", "", "", _fmt(1.0)])
    for other in sorted(report.hook):
        for dom in report.domains + ["all"]:
            h = report.hook[other].get(dom)
            if h and h["pairs"]:
                radar.append([other, dom, h["wins"], h["losses"], h["ties"], _fmt(h["hook_score"])])
    files["hook_radar.csv"] = _csv(radar)
    files["report.json"] = json.dumps(report.to_dict(), indent=1, sort_keys=True, ensure_ascii=False) + "\n"

    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            atomic_write_text(out / name, text)
            written.append(out / name)
    except OSError as exc:
        raise ReportWriteError(f"cannot write report to {out}: {exc}") from exc
    return written
