"""Attack campaign runner: scenarios, calibration, aggregation, reports.

A JSON config file names the network pair, taps, image manifests, attack
budget and per-scenario parameters (paths are resolved against the
config file's directory)::

    {
      "network": {"description": "net.txt", "weights": "net.weights"},
      "descriptor_tap": "descriptor",
      "score_tap": "scores",
      "class_labels": ["p00", "p01", ...],
      "enrollment": "enrollment.tsv",
      "probes": "probes.tsv",
      "adversaries": "adversaries.tsv",
      "attack": {"max_steps": 500, "step_linf": 1.0},
      "scenarios": {
        "end_to_end_softmax": {},
        "end_to_end_descriptor": {},
        "euclidean_system": {"far_target": 0.001},
        "cosine_system": {"far_target": 0.001}
      }
    }

Enrollment/probe manifests hold ``identity path`` per line; the
adversary manifest holds ``adversary_id kind identity path`` where kind
is ``internal`` (held-out image of an enrolled identity, which is then
skipped as a target) or ``external`` (identity column ``-``).

Scenarios:

* ``end_to_end_softmax``      mimic a one-hot score vector; success is
  the end-to-end classifier naming the target.
* ``end_to_end_descriptor``   mimic the target's gallery descriptor;
  success is still the end-to-end classifier naming the target.
* ``euclidean_system`` / ``cosine_system``   mimic the gallery
  descriptor; success is the respective distance dropping below a
  threshold calibrated to the configured false-accept rate.

Reports are bit-stable: float fields are rounded to 6 significant digits
when records are built, rows are sorted (internal adversaries before
external, then by id and target) and files use LF line endings.
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from featmimic.attack import (
    AttackConfig,
    MimicPredicate,
    lots_iterative,
    one_hot_target,
)
from featmimic.modelio import load_network, read_image, write_image
from featmimic.network import NetworkSpec, Tap, classify, features
from featmimic.quality import pass_score, perturbation_norms
from featmimic.verification import (
    GalleryTemplate,
    RocCurve,
    enroll,
    roc,
    score_all,
    threshold_at_far,
)

SCENARIOS = (
    "end_to_end_softmax",
    "end_to_end_descriptor",
    "euclidean_system",
    "cosine_system",
)


def _sig6(value):
    return float(f"{float(value):.6g}")


@dataclass(frozen=True)
class AdversaryCase:
    adversary_id: str
    kind: str
    identity: str  # "" for external adversaries
    image: np.ndarray


@dataclass(frozen=True)
class HarnessConfig:
    base_dir: str
    net: NetworkSpec
    descriptor_tap: Tap
    score_tap: Tap
    class_labels: tuple
    enrollment: tuple  # (identity, image) pairs
    probes: tuple
    adversaries: tuple  # AdversaryCase
    max_steps: int
    step_linf: float
    scenarios: dict


def _read_pairs(path):
    rows = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            identity, rel = line.split()
            rows.append((identity, read_image(os.path.join(base, rel))))
    if not rows:
        raise ValueError(f"{path}: empty manifest")
    return tuple(rows)


def _read_adversaries(path):
    rows = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            adv_id, kind, identity, rel = line.split()
            if kind not in ("internal", "external"):
                raise ValueError(f"{path}: unknown adversary kind {kind!r}")
            if kind == "internal" and identity == "-":
                raise ValueError(f"{path}: internal adversary {adv_id} needs an identity")
            rows.append(
                AdversaryCase(
                    adv_id,
                    kind,
                    "" if identity == "-" else identity,
                    read_image(os.path.join(base, rel)),
                )
            )
    if not rows:
        raise ValueError(f"{path}: empty manifest")
    return tuple(rows)


def load_config(path) -> HarnessConfig:
    """Parse a harness config file and load everything it references."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(rel):
        return os.path.join(base, rel)

    net = load_network(
        resolve(raw["network"]["description"]), resolve(raw["network"]["weights"])
    )
    for tap_key in ("descriptor_tap", "score_tap"):
        if raw[tap_key] not in net.taps:
            raise ValueError(f"config names unknown tap {raw[tap_key]!r}")
    scenarios = dict(raw.get("scenarios", {}))
    for name in scenarios:
        if name not in SCENARIOS:
            raise ValueError(f"config names unknown scenario {name!r}")
    attack = raw.get("attack", {})
    return HarnessConfig(
        base_dir=base,
        net=net,
        descriptor_tap=net.taps[raw["descriptor_tap"]],
        score_tap=net.taps[raw["score_tap"]],
        class_labels=tuple(raw["class_labels"]),
        enrollment=_read_pairs(resolve(raw["enrollment"])),
        probes=_read_pairs(resolve(raw["probes"])),
        adversaries=_read_adversaries(resolve(raw["adversaries"])),
        max_steps=int(attack.get("max_steps", 500)),
        step_linf=float(attack.get("step_linf", 1.0)),
        scenarios=scenarios,
    )


def build_gallery(config: HarnessConfig):
    """Enroll every identity in the enrollment manifest, sorted by name."""
    by_identity = {}
    for identity, image in config.enrollment:
        vec = features(config.net, image, config.descriptor_tap)
        by_identity.setdefault(identity, []).append(vec)
    return [enroll(identity, by_identity[identity]) for identity in sorted(by_identity)]


@dataclass(frozen=True)
class Calibration:
    scenario: str
    kind: str
    far_target: float
    threshold: float
    num_positives: int
    num_negatives: int
    curve: RocCurve
    gallery: tuple


def calibrate(config: HarnessConfig, scenario: str) -> Calibration:
    """Threshold a distance scenario at its configured false-accept rate."""
    if scenario not in ("euclidean_system", "cosine_system"):
        raise ValueError(f"scenario {scenario!r} has no distance threshold")
    params = config.scenarios.get(scenario, {})
    far_target = float(params.get("far_target", 0.001))
    kind = scenario.removesuffix("_system")
    gallery = build_gallery(config)
    probe_vecs = [
        (identity, features(config.net, image, config.descriptor_tap))
        for identity, image in config.probes
    ]
    positives, negatives = score_all(probe_vecs, gallery, kind)
    threshold = threshold_at_far(negatives, far_target)
    return Calibration(
        scenario=scenario,
        kind=kind,
        far_target=far_target,
        threshold=threshold,
        num_positives=positives.size,
        num_negatives=negatives.size,
        curve=roc(positives, negatives),
        gallery=tuple(gallery),
    )


@dataclass
class AttackRecord:
    adversary_id: str
    adversary_kind: str
    target_identity: str
    scenario: str
    success: bool
    steps_used: int
    final_distance: float
    pass_score: float
    align_fallback: bool
    l2: float
    linf: float
    image_path: str


def _class_index(config, identity):
    try:
        return config.class_labels.index(identity)
    except ValueError:
        raise ValueError(f"identity {identity!r} missing from class_labels") from None


def _pair_plan(config, scenario, calibration):
    """One (adversary, target, tap, target vector, predicate) tuple per attack."""
    gallery = calibration.gallery if calibration else build_gallery(config)
    plan = []
    for adv in config.adversaries:
        for template in gallery:
            if adv.kind == "internal" and adv.identity == template.identity:
                continue
            if scenario == "end_to_end_softmax":
                idx = _class_index(config, template.identity)
                tap = config.score_tap
                target = one_hot_target(len(config.class_labels), idx)
                predicate = MimicPredicate("classified_as", label=idx)
            elif scenario == "end_to_end_descriptor":
                idx = _class_index(config, template.identity)
                tap = config.descriptor_tap
                target = template.mean_descriptor
                predicate = MimicPredicate("classified_as", label=idx)
            else:
                tap = config.descriptor_tap
                target = template.mean_descriptor
                predicate = MimicPredicate(
                    f"{calibration.kind}_below", threshold=calibration.threshold
                )
            plan.append((adv, template.identity, tap, target, predicate))
    return plan


def _run_pair(task):
    net, attack_cfg, adv, target_identity, scenario, tap, target, predicate, out_dir = task
    outcome = lots_iterative(net, adv.image, tap, target, predicate, attack_cfg)
    quality = pass_score(outcome.perturbed, adv.image)
    l2, linf = perturbation_norms(outcome.perturbed, adv.image)
    rel_path = ""
    if out_dir is not None:
        rel_path = os.path.join(
            "images", scenario, f"{adv.adversary_id}__{target_identity}.pgm"
        )
        write_image(os.path.join(out_dir, rel_path), outcome.perturbed)
    return AttackRecord(
        adversary_id=adv.adversary_id,
        adversary_kind=adv.kind,
        target_identity=target_identity,
        scenario=scenario,
        success=bool(outcome.success),
        steps_used=int(outcome.steps_used),
        final_distance=_sig6(outcome.final_distance),
        pass_score=_sig6(quality.score),
        align_fallback=bool(quality.align_fallback),
        l2=_sig6(l2),
        linf=_sig6(linf),
        image_path=rel_path,
    )


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    records: tuple
    calibration: Calibration = None


def run_scenario(
    config: HarnessConfig,
    scenario: str,
    out_dir=None,
    jobs: int = 1,
    max_steps=None,
    step_linf=None,
) -> ScenarioResult:
    """Run every adversary/target attack of one scenario.

    Internal adversaries skip their own identity.  Records come back in
    deterministic order regardless of ``jobs``; perturbed images are
    persisted under ``out_dir/images/<scenario>/`` when an output
    directory is given.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; known: {', '.join(SCENARIOS)}")
    if scenario not in config.scenarios:
        raise ValueError(f"scenario {scenario!r} not enabled in this config")
    calibration = None
    if scenario in ("euclidean_system", "cosine_system"):
        calibration = calibrate(config, scenario)
    attack_cfg = AttackConfig(
        max_steps=config.max_steps if max_steps is None else int(max_steps),
        step_linf=config.step_linf if step_linf is None else float(step_linf),
        pixel_domain=config.net.pixel_domain,
    )
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "images", scenario), exist_ok=True)
    tasks = [
        (config.net, attack_cfg, adv, identity, scenario, tap, target, predicate, out_dir)
        for adv, identity, tap, target, predicate in _pair_plan(
            config, scenario, calibration
        )
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_pair, tasks, chunksize=8))
    else:
        records = [_run_pair(task) for task in tasks]
    records.sort(
        key=lambda r: (r.adversary_kind != "internal", r.adversary_id, r.target_identity)
    )
    return ScenarioResult(scenario=scenario, records=tuple(records), calibration=calibration)


@dataclass
class SummaryRow:
    adversary_id: str
    adversary_kind: str
    scenario: str
    attempts: int
    successes: int
    success_rate: float
    pass_mean: float  # None when no successes
    pass_std: float  # None when fewer than two successes


def aggregate(records):
    """Per-adversary, per-scenario success rates and quality statistics.

    Success rate is over all attempts; quality statistics cover
    successful attacks only (mean, and sample standard deviation when at
    least two successes exist).  Rows order internal adversaries before
    external ones.
    """
    groups = {}
    for rec in records:
        key = (rec.adversary_kind != "internal", rec.adversary_id, rec.scenario)
        groups.setdefault(key, []).append(rec)
    rows = []
    for key in sorted(groups):
        recs = groups[key]
        scores = [r.pass_score for r in recs if r.success]
        mean = _sig6(np.mean(scores)) if scores else None
        std = _sig6(np.std(scores, ddof=1)) if len(scores) >= 2 else None
        rows.append(
            SummaryRow(
                adversary_id=recs[0].adversary_id,
                adversary_kind=recs[0].adversary_kind,
                scenario=recs[0].scenario,
                attempts=len(recs),
                successes=sum(r.success for r in recs),
                success_rate=_sig6(sum(r.success for r in recs) / len(recs)),
                pass_mean=mean,
                pass_std=std,
            )
        )
    return rows


_RECORD_FIELDS = [f.name for f in fields(AttackRecord)]
_SUMMARY_FIELDS = [f.name for f in fields(SummaryRow)]


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _write_csv(path, names, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in rows:
            writer.writerow([_cell(getattr(row, n)) for n in names])


def _write_jsonl(path, names, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            payload = {n: getattr(row, n) for n in names}
            fh.write(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def export_records(records, path, fmt: str = "csv"):
    """Write attack records as CSV or JSONL with bit-stable bytes."""
    if fmt == "csv":
        _write_csv(path, _RECORD_FIELDS, records)
    elif fmt == "jsonl":
        _write_jsonl(path, _RECORD_FIELDS, records)
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def export_summary(rows, path, fmt: str = "csv"):
    if fmt == "csv":
        _write_csv(path, _SUMMARY_FIELDS, rows)
    elif fmt == "jsonl":
        _write_jsonl(path, _SUMMARY_FIELDS, rows)
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def _from_text(name, text, types):
    kind = types[name]
    if text == "" and kind is float:
        return None
    if kind is bool:
        return text == "true"
    return kind(text)


def _norm_type(t):
    if isinstance(t, str):
        return {"str": str, "int": int, "float": float, "bool": bool}[t]
    return t


_RECORD_TYPES = {f.name: _norm_type(f.type) for f in fields(AttackRecord)}
_SUMMARY_TYPES = {f.name: _norm_type(f.type) for f in fields(SummaryRow)}


def parse_records(path):
    """Read back records written by export_records (CSV or JSONL)."""
    return _parse(path, AttackRecord, _RECORD_FIELDS, _RECORD_TYPES)


def parse_summary(path):
    return _parse(path, SummaryRow, _SUMMARY_FIELDS, _SUMMARY_TYPES)


def _parse(path, cls, names, types):
    rows = []
    if str(path).endswith(".jsonl"):
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rows.append(cls(**json.loads(line)))
        return rows
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != names:
            raise ValueError(f"{path}: unexpected header {header}")
        for cells in reader:
            kwargs = {n: _from_text(n, c, types) for n, c in zip(names, cells)}
            rows.append(cls(**kwargs))
    return rows
