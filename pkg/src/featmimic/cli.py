"""Command-line entry points.

Subcommands::

    featmimic calibrate --config CFG --scenario euclidean_system --out-dir DIR
    featmimic attack    --config CFG --scenario SCENARIO --out-dir DIR
    featmimic report    --records FILE [FILE ...] --out-dir DIR
    featmimic pass      --original IMG --perturbed IMG
    featmimic verify    --config CFG --image IMG --identity ID [...]

Every command exits 0 when the run completes; attack failures are data,
not errors.  Omitting ``--config`` uses the bundled fixtures.
"""

import argparse
import json
import os
import sys

from featmimic import harness
from featmimic.fixtures import bundled_config_path
from featmimic.modelio import load_gallery, read_image, save_gallery
from featmimic.network import features
from featmimic.quality import EccConfig, pass_score, perturbation_norms
from featmimic.verification import verify


def _fmt(value):
    return f"{value:.6g}"


def _load(args):
    return harness.load_config(args.config)


def _cmd_calibrate(args):
    config = _load(args)
    calibration = harness.calibrate(config, args.scenario)
    os.makedirs(args.out_dir, exist_ok=True)
    gallery_path = os.path.join(args.out_dir, "gallery.desc")
    save_gallery(gallery_path, calibration.gallery)
    roc_path = os.path.join(args.out_dir, f"roc_{args.scenario}.csv")
    with open(roc_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("threshold,far,tar\n")
        curve = calibration.curve
        for t, far, tar in zip(curve.thresholds, curve.far, curve.tar):
            fh.write(f"{_fmt(t)},{_fmt(far)},{_fmt(tar)}\n")
    meta = {
        "scenario": calibration.scenario,
        "kind": calibration.kind,
        "far_target": calibration.far_target,
        "threshold": calibration.threshold,
        "num_positives": calibration.num_positives,
        "num_negatives": calibration.num_negatives,
    }
    with open(
        os.path.join(args.out_dir, "calibration.json"), "w", encoding="utf-8", newline="\n"
    ) as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"{args.scenario}: threshold {_fmt(calibration.threshold)} at "
        f"far<={calibration.far_target:g} "
        f"({calibration.num_negatives} impostor scores)"
    )
    print(f"wrote {gallery_path}, {roc_path}")
    return 0


def _cmd_attack(args):
    config = _load(args)
    result = harness.run_scenario(
        config,
        args.scenario,
        out_dir=args.out_dir,
        jobs=args.jobs,
        max_steps=args.max_steps,
        step_linf=args.step_linf,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    for fmt in ("csv", "jsonl"):
        harness.export_records(
            result.records, os.path.join(args.out_dir, f"records.{fmt}"), fmt
        )
    if result.calibration is not None:
        meta = {
            "scenario": result.calibration.scenario,
            "kind": result.calibration.kind,
            "far_target": result.calibration.far_target,
            "threshold": result.calibration.threshold,
        }
        with open(
            os.path.join(args.out_dir, "calibration.json"),
            "w",
            encoding="utf-8",
            newline="\n",
        ) as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    wins = sum(r.success for r in result.records)
    print(
        f"{args.scenario}: {wins}/{len(result.records)} attacks succeeded; "
        f"records in {args.out_dir}"
    )
    return 0


def _cmd_report(args):
    records = []
    for path in args.records:
        records.extend(harness.parse_records(path))
    rows = harness.aggregate(records)
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, f"summary.{args.format}")
    harness.export_summary(rows, out, args.format)
    for row in rows:
        quality = "-" if row.pass_mean is None else _fmt(row.pass_mean)
        spread = "-" if row.pass_std is None else _fmt(row.pass_std)
        print(
            f"{row.adversary_id} [{row.adversary_kind}] {row.scenario}: "
            f"{row.successes}/{row.attempts} "
            f"pass {quality} +/- {spread}"
        )
    print(f"wrote {out}")
    return 0


def _cmd_pass(args):
    original = read_image(args.original)
    perturbed = read_image(args.perturbed)
    result = pass_score(perturbed, original, EccConfig(model=args.model))
    l2, linf = perturbation_norms(perturbed, original)
    print(f"pass {_fmt(result.score)}")
    print(f"align_fallback {'true' if result.align_fallback else 'false'}")
    print(f"l2 {_fmt(l2)}")
    print(f"linf {_fmt(linf)}")
    return 0


def _cmd_verify(args):
    config = _load(args)
    if args.gallery:
        gallery = load_gallery(args.gallery)
    else:
        gallery = harness.build_gallery(config)
    template = next((t for t in gallery if t.identity == args.identity), None)
    if template is None:
        print(f"unknown identity {args.identity!r}", file=sys.stderr)
        return 2
    threshold = args.threshold
    if threshold is None:
        scenario = f"{args.kind}_system"
        threshold = harness.calibrate(config, scenario).threshold
    descriptor = features(config.net, read_image(args.image), config.descriptor_tap)
    accepted, dist = verify(descriptor, template, threshold, args.kind)
    print("ACCEPT" if accepted else "REJECT")
    print(f"distance {_fmt(dist)}")
    print(f"threshold {_fmt(threshold)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="featmimic",
        description="Feature-mimicry attacks and verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    default_cfg = bundled_config_path()

    p = sub.add_parser("calibrate", help="compute a distance threshold and ROC")
    p.add_argument("--config", default=default_cfg)
    p.add_argument(
        "--scenario", default="euclidean_system", choices=["euclidean_system", "cosine_system"]
    )
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("attack", help="run one scenario's full attack sweep")
    p.add_argument("--config", default=default_cfg)
    p.add_argument("--scenario", required=True, choices=list(harness.SCENARIOS))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--step-linf", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("report", help="aggregate attack records into a summary")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", default="csv", choices=["csv", "jsonl"])
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("pass", help="perceptual quality of an image pair")
    p.add_argument("--original", required=True)
    p.add_argument("--perturbed", required=True)
    p.add_argument(
        "--model", default="homography", choices=["translation", "affine", "homography"]
    )
    p.set_defaults(func=_cmd_pass)

    p = sub.add_parser("verify", help="verify one image against an identity")
    p.add_argument("--config", default=default_cfg)
    p.add_argument("--image", required=True)
    p.add_argument("--identity", required=True)
    p.add_argument("--kind", default="euclidean", choices=["euclidean", "cosine"])
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--gallery", default=None)
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
