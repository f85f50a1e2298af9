#!/usr/bin/env python3
"""Generate the bundled desk-scale fixtures and the frozen test goldens.

Builds 16 procedural grayscale identities (10 enrolled, 6 external),
renders enrollment/probe/adversary image sets, assembles the frozen
10-class network (random feature stack scaled to sane activation ranges,
plus a nearest-centroid readout head), validates that the fixture
actually supports the advertised properties (clean classification,
near-perfect verification separation, high attack success) and writes
everything under src/featmimic/data plus goldens under tests/data.

Deterministic for the fixed seed; run from the repository root:

    python3 tools/gen_fixtures.py
"""

import json
import os
import sys

import numpy as np
from scipy.signal import correlate2d

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(REPO, "src"))

from featmimic import kernels  # noqa: E402
from featmimic.attack import AttackConfig, MimicPredicate, lots_iterative  # noqa: E402
from featmimic.harness import calibrate, load_config, run_scenario  # noqa: E402
from featmimic.modelio import save_network, write_image  # noqa: E402
from featmimic.network import (  # noqa: E402
    Conv2d,
    Dense,
    Flatten,
    MaxPool2d,
    NetworkSpec,
    Relu,
    Softmax,
    Tap,
    classify,
    features,
    forward,
)
from featmimic.quality import pass_score, perturbation_norms  # noqa: E402
from featmimic.verification import distance, enroll, score_all  # noqa: E402

SEED = 20260816
SIZE = 32
DATA = os.path.join(REPO, "src", "featmimic", "data")
TESTS = os.path.join(REPO, "tests", "data")

ENROLLED = [f"p{i:02d}" for i in range(10)]
EXTERNAL = [f"x{i:02d}" for i in range(6)]
N_ENROLL = 10
N_PROBE = 12
INTERNAL_ADVERSARIES = ENROLLED[:6]


def upsample(a, size):
    h, w = a.shape
    ys = np.linspace(0.0, h - 1.0, size)
    xs = np.linspace(0.0, w - 1.0, size)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    return (
        a[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
        + a[np.ix_(y0, x1)] * (1 - fy) * fx
        + a[np.ix_(y1, x0)] * fy * (1 - fx)
        + a[np.ix_(y1, x1)] * fy * fx
    )


def identity_base(index):
    rng = np.random.default_rng([SEED, 1, index])
    field = upsample(rng.normal(0.0, 1.0, (5, 5)), SIZE)
    field += 0.45 * upsample(rng.normal(0.0, 1.0, (11, 11)), SIZE)
    field = (field - field.min()) / np.ptp(field)
    return 25.0 + 205.0 * field


def render(base, rng):
    img = base + rng.normal(0.0, 5.0)
    img = img + 4.0 * upsample(rng.normal(0.0, 1.0, (8, 8)), SIZE)
    img = img + rng.normal(0.0, 2.5, base.shape)
    img = np.clip(img, 0.0, 255.0)
    return np.floor(img + 0.5).astype(np.float32)[None]  # (1, 32, 32), integral


def build_dataset():
    enroll_set, probe_set, adversaries = [], [], []
    for idx, identity in enumerate(ENROLLED):
        base = identity_base(idx)
        rng = np.random.default_rng([SEED, 2, idx])
        for i in range(N_ENROLL):
            enroll_set.append((identity, f"{identity}_e{i:02d}", render(base, rng)))
        for i in range(N_PROBE):
            probe_set.append((identity, f"{identity}_q{i:02d}", render(base, rng)))
        if identity in INTERNAL_ADVERSARIES:
            adversaries.append(
                (f"int_{identity}", "internal", identity, f"{identity}_a00", render(base, rng))
            )
    for jdx, identity in enumerate(EXTERNAL):
        base = identity_base(100 + jdx)
        rng = np.random.default_rng([SEED, 3, jdx])
        adversaries.append(
            (f"ext_{identity}", "external", "-", f"{identity}_a00", render(base, rng))
        )
    return enroll_set, probe_set, adversaries


def feature_stack(images, k1, b1, k2, b2):
    """conv-relu-pool twice, flatten; used while scaling weights."""
    out = []
    for img in images:
        x = img - np.float32(128.0)
        a = np.maximum(kernels.conv2d_forward(x, k1, b1, 1, 1, 1, 1), 0)
        a, _ = kernels.maxpool2d_forward(a, 2, 2, 2, 2)
        a = np.maximum(kernels.conv2d_forward(a, k2, b2, 1, 1, 1, 1), 0)
        a, _ = kernels.maxpool2d_forward(a, 2, 2, 2, 2)
        out.append(a.reshape(-1))
    return np.stack(out)


def build_network(enroll_set):
    sample = [img for _, _, img in enroll_set[:: max(1, len(enroll_set) // 24)]]
    rng = np.random.default_rng([SEED, 4])

    k1 = rng.normal(0.0, 1.0, (8, 1, 3, 3)).astype(np.float32)
    b1 = np.zeros(8, np.float32)
    pre1 = np.stack(
        [kernels.conv2d_forward(img - np.float32(128.0), k1, b1, 1, 1, 1, 1) for img in sample]
    )
    k1 *= np.float32(18.0 / pre1.std())
    b1 = rng.normal(0.0, 2.5, 8).astype(np.float32)

    k2 = rng.normal(0.0, 1.0, (16, 8, 3, 3)).astype(np.float32)
    b2 = np.zeros(16, np.float32)

    def conv1_out(img):
        a = np.maximum(kernels.conv2d_forward(img - np.float32(128.0), k1, b1, 1, 1, 1, 1), 0)
        a, _ = kernels.maxpool2d_forward(a, 2, 2, 2, 2)
        return a

    pre2 = np.stack([kernels.conv2d_forward(conv1_out(img), k2, b2, 1, 1, 1, 1) for img in sample])
    k2 *= np.float32(18.0 / pre2.std())
    b2 = rng.normal(0.0, 2.5, 16).astype(np.float32)

    flat = feature_stack(sample, k1, b1, k2, b2)
    w1 = rng.normal(0.0, 1.0, (64, flat.shape[1])).astype(np.float32)
    pre3 = flat @ w1.T
    w1 *= np.float32(8.0 / pre3.std())
    bias1 = np.zeros(64, np.float32)

    # nearest-centroid readout over post-relu descriptors; the gain keeps
    # softmax gradients alive (saturated outputs would stall attacks)
    flat_all = feature_stack([img for _, _, img in enroll_set], k1, b1, k2, b2)
    desc_post = np.maximum(flat_all @ w1.T + bias1, 0.0)
    labels = np.array([ENROLLED.index(identity) for identity, _, _ in enroll_set])
    centroids = np.stack([desc_post[labels == i].mean(axis=0) for i in range(len(ENROLLED))])
    logits_raw = desc_post @ centroids.T - 0.5 * (centroids**2).sum(axis=1)
    margins = []
    for row, lab in zip(logits_raw, labels):
        other = np.delete(row, lab)
        margins.append(row[lab] - other.max())
    margins = np.array(margins)
    assert margins.min() > 0, "enrollment images must separate under the raw head"
    gain = min(5.0 / np.quantile(margins, 0.1), 11.0 / margins.max())
    w2 = (gain * centroids).astype(np.float32)
    bias2 = (-0.5 * gain * (centroids**2).sum(axis=1)).astype(np.float32)

    layers = (
        Conv2d("conv1", k1, b1, (1, 1), (1, 1)),
        Relu("relu1"),
        MaxPool2d("pool1", (2, 2), (2, 2)),
        Conv2d("conv2", k2, b2, (1, 1), (1, 1)),
        Relu("relu2"),
        MaxPool2d("pool2", (2, 2), (2, 2)),
        Flatten("flat"),
        Dense("fc1", w1, bias1),
        Relu("relu3"),
        Dense("fc2", w2, bias2),
        Softmax("probs"),
    )
    return NetworkSpec(
        layers=layers,
        input_shape=(1, SIZE, SIZE),
        pixel_domain=(0.0, 255.0),
        channel_means=(128.0,),
        taps={
            "descriptor": Tap("fc1", "pre_activation"),
            "scores": Tap("probs", "post_activation"),
        },
    )


def reference_forward64(net, image):
    """Independent float64 forward pass (scipy correlation), for goldens."""
    x = image.astype(np.float64) - np.asarray(net.channel_means, np.float64)[:, None, None]
    trace = {}
    for layer in net.layers:
        if layer.kind == "conv2d":
            k = layer.kernel.astype(np.float64)
            ph, pw = layer.padding
            xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
            f = k.shape[0]
            out = []
            for fi in range(f):
                acc = np.zeros((xp.shape[1] - k.shape[2] + 1, xp.shape[2] - k.shape[3] + 1))
                for ci in range(k.shape[1]):
                    acc += correlate2d(xp[ci], k[fi, ci], mode="valid")
                out.append(acc[:: layer.stride[0], :: layer.stride[1]] + float(layer.bias[fi]))
            x = np.stack(out)
        elif layer.kind == "relu":
            x = np.maximum(x, 0.0)
        elif layer.kind == "maxpool2d":
            wh, ww = layer.window
            sh, sw = layer.stride
            c, h, w = x.shape
            ho, wo = (h - wh) // sh + 1, (w - ww) // sw + 1
            y = np.empty((c, ho, wo))
            for i in range(ho):
                for j in range(wo):
                    y[:, i, j] = x[:, i * sh : i * sh + wh, j * sw : j * sw + ww].max(axis=(1, 2))
            x = y
        elif layer.kind == "flatten":
            x = x.reshape(-1)
        elif layer.kind == "dense":
            x = layer.weight.astype(np.float64) @ x + layer.bias.astype(np.float64)
        else:
            e = np.exp(x - x.max())
            x = e / e.sum()
        trace[layer.name] = x.copy()
    return trace


def main():
    os.makedirs(os.path.join(DATA, "images"), exist_ok=True)
    os.makedirs(TESTS, exist_ok=True)

    enroll_set, probe_set, adversaries = build_dataset()
    net = build_network(enroll_set)
    dtap = net.taps["descriptor"]

    # accuracy of the readout on probes and internal adversaries
    wrong = [name for identity, name, img in probe_set if ENROLLED.index(identity) != classify(net, img)]
    assert not wrong, f"misclassified probes: {wrong}"
    for adv_id, kind, identity, name, img in adversaries:
        if kind == "internal":
            assert classify(net, img) == ENROLLED.index(identity), f"{adv_id} misclassified"

    # verification separation
    gallery = []
    by_id = {}
    for identity, _, img in enroll_set:
        by_id.setdefault(identity, []).append(features(net, img, dtap))
    gallery = [enroll(identity, by_id[identity]) for identity in sorted(by_id)]
    probe_vecs = [(identity, features(net, img, dtap)) for identity, _, img in probe_set]
    for kind in ("euclidean", "cosine"):
        pos, neg = score_all(probe_vecs, gallery, kind)
        print(f"{kind}: genuine max {pos.max():.4g}, impostor min {neg.min():.4g}")
        assert pos.max() < neg.min(), f"{kind}: fixture scores overlap"
        for adv_id, k2_, identity, name, img in adversaries:
            if k2_ == "internal":
                tpl = next(t for t in gallery if t.identity == identity)
                d = distance(features(net, img, dtap), tpl.mean_descriptor, kind)
                assert d < neg.min(), f"{adv_id} would not verify as itself under {kind}"

    # persist the network and images
    save_network(net, os.path.join(DATA, "net.txt"), os.path.join(DATA, "net.weights"))
    manifests = {"enrollment.tsv": [], "probes.tsv": [], "adversaries.tsv": []}
    for identity, name, img in enroll_set:
        write_image(os.path.join(DATA, "images", f"{name}.pgm"), img)
        manifests["enrollment.tsv"].append(f"{identity} images/{name}.pgm")
    for identity, name, img in probe_set:
        write_image(os.path.join(DATA, "images", f"{name}.pgm"), img)
        manifests["probes.tsv"].append(f"{identity} images/{name}.pgm")
    for adv_id, kind, identity, name, img in adversaries:
        write_image(os.path.join(DATA, "images", f"{name}.pgm"), img)
        manifests["adversaries.tsv"].append(f"{adv_id} {kind} {identity} images/{name}.pgm")
    for fname, lines in manifests.items():
        with open(os.path.join(DATA, fname), "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    config = {
        "network": {"description": "net.txt", "weights": "net.weights"},
        "descriptor_tap": "descriptor",
        "score_tap": "scores",
        "class_labels": ENROLLED,
        "enrollment": "enrollment.tsv",
        "probes": "probes.tsv",
        "adversaries": "adversaries.tsv",
        "attack": {"max_steps": 500, "step_linf": 1.0},
        "scenarios": {
            "end_to_end_softmax": {},
            "end_to_end_descriptor": {},
            "euclidean_system": {"far_target": 0.001},
            "cosine_system": {"far_target": 0.001},
        },
    }
    with open(os.path.join(DATA, "config.json"), "w", encoding="ascii", newline="\n") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")

    # full bundled sweeps through the real harness: the acceptance bounds
    # (success rate, first-step progress) must hold with margin
    cfg = load_config(os.path.join(DATA, "config.json"))
    for scenario in ("euclidean_system", "cosine_system", "end_to_end_softmax", "end_to_end_descriptor"):
        result = run_scenario(cfg, scenario)
        n = len(result.records)
        wins = sum(r.success for r in result.records)
        steps = sorted(r.steps_used for r in result.records)
        print(
            f"{scenario}: {wins}/{n} success, median steps {steps[n // 2]}, "
            f"max steps {steps[-1]}"
        )
        if result.calibration:
            print(f"  threshold {result.calibration.threshold:.6g}")
        assert wins / n >= 0.95, f"{scenario}: fixture sweep too weak ({wins}/{n})"

    # golden forward trace from the independent float64 evaluator
    golden_img = probe_set[0][2]
    ref = reference_forward64(net, golden_img)
    golden = {
        "image": f"images/{probe_set[0][1]}.pgm",
        "descriptor": [float(v) for v in ref["fc1"]],
        "scores": [float(v) for v in ref["probs"]],
    }
    with open(os.path.join(TESTS, "golden_trace.json"), "w", encoding="ascii", newline="\n") as fh:
        json.dump(golden, fh, indent=2)
        fh.write("\n")

    # golden adversarial pair and its frozen quality scores
    adv = next(a for a in adversaries if a[0] == "int_p00")
    tpl = next(t for t in gallery if t.identity == "p01")
    calib = calibrate(cfg, "euclidean_system")
    outcome = lots_iterative(
        net,
        adv[4],
        dtap,
        tpl.mean_descriptor,
        MimicPredicate("euclidean_below", threshold=calib.threshold),
        AttackConfig(),
    )
    assert outcome.success
    write_image(os.path.join(TESTS, "golden_origin.pgm"), adv[4])
    write_image(os.path.join(TESTS, "golden_perturbed.pgm"), outcome.perturbed)
    quality = pass_score(outcome.perturbed, adv[4])
    l2, linf = perturbation_norms(outcome.perturbed, adv[4])
    with open(os.path.join(TESTS, "golden_pass.json"), "w", encoding="ascii", newline="\n") as fh:
        json.dump(
            {
                "pass_score": quality.score,
                "align_fallback": quality.align_fallback,
                "l2": l2,
                "linf": linf,
                "steps_used": outcome.steps_used,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    print(f"golden pair: steps {outcome.steps_used}, pass {quality.score:.6f}, l2 {l2:.2f}")

    # spot-check the persisted net reproduces the in-memory one
    from featmimic.modelio import load_network

    reloaded = load_network(os.path.join(DATA, "net.txt"), os.path.join(DATA, "net.weights"))
    probe0 = probe_set[0][2]
    assert np.array_equal(forward(net, probe0).final, forward(reloaded, probe0).final)
    print("fixtures written to", DATA)


if __name__ == "__main__":
    main()
