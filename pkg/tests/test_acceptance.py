"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import time

import numpy as np

from cdinpaint.checkpoint import CheckpointError, load_checkpoint, read_entries, save_checkpoint
from cdinpaint.compression_net import build_network, init_parameters, default_spec
from cdinpaint.decompression import (
    block_mean,
    decompress,
    find_similar_pixel,
    finetune,
    nearest_indices,
    reference_from_truth,
    select_textures,
    stretch_damaged,
)
from cdinpaint.discriminator import spectral_normalize
from cdinpaint.gated_layers import PartialConvLayer
from cdinpaint.gradcheck import run_suite
from cdinpaint.losses import downsample_gt, l1_loss
from cdinpaint.masks import edge_mask, sample_training_mask
from cdinpaint.metrics import similarity_ratio, train_toy_classifier
from cdinpaint.optim import AdamState, adam_step
from cdinpaint.synthetic import TEXTURE_CLASSES, scene_images, texture_dataset
from cdinpaint.tensor_core import ConvParams
from cdinpaint.trainer import LossWeights, train_step


def test_gradient_suite(criterion):
    t0 = time.perf_counter()
    results = run_suite()
    elapsed = time.perf_counter() - t0
    for r in results:
        print("   ", r.line())
    ok = all(r.ok for r in results) and elapsed < 60
    worst = max(results, key=lambda r: r.error / r.tol)
    criterion("gradient suite", ok, f"worst {worst.name} {worst.error:.2e} (tol {worst.tol:.0e}), {elapsed:.1f}s < 60s")


def test_shape_law(criterion):
    net = build_network()
    init_parameters(net, 0)
    net.eval()
    img = np.random.default_rng(0).uniform(size=(1, 3, 256, 256)).astype(np.float32)
    out = net.forward(img, np.ones((1, 1, 256, 256), np.float32))
    ok = out.shape == (1, 3, 32, 32) and net.downsample_factor == 8
    criterion("shape law", ok, f"(1,3,256,256) -> {out.shape}, factor {net.downsample_factor}")


def test_partial_conv_properties(criterion):
    rng = np.random.default_rng(0)
    checks = []
    for k in (3, 5, 7):
        layer = PartialConvLayer(ConvParams(rng.standard_normal((1, 1, k, k)), np.zeros(1), 1, k // 2))
        x = np.zeros((1, 1, 48, 48))
        _, ones = layer.forward(x, np.ones((1, 1, 48, 48)))
        checks.append(np.all(ones == 1))
        mask = np.ones((1, 1, 48, 48))
        r0, r1, c0, c1 = 6, 40, 10, 38
        mask[..., r0:r1, c0:c1] = 0
        while not mask.all():
            _, mask = layer.forward(x, mask)
            r0, r1, c0, c1 = r0 + k // 2, r1 - k // 2, c0 + k // 2, c1 - k // 2
            expected = np.ones((48, 48))
            if r0 < r1 and c0 < c1:
                expected[r0:r1, c0:c1] = 0
            checks.append(np.array_equal(mask[0, 0], expected))
            checks.append(set(np.unique(mask)) <= {0.0, 1.0})
    criterion("partial-conv properties", all(checks), f"{len(checks)} checks over k=3,5,7")


def exhaustive_argmin(out, ref, x, y):
    best, arg = None, None
    for i in range(ref.shape[0]):
        for j in range(ref.shape[1]):
            d = abs(out[x, y, 0] - ref[i, j, 0]) + abs(out[x, y, 1] - ref[i, j, 1]) + abs(out[x, y, 2] - ref[i, j, 2])
            if best is None or d < best:
                best, arg = d, (i, j)
    return arg


def test_texture_selection_oracle(criterion):
    mismatches = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        # every other instance is coarsely quantized so ties are common
        levels = 3 if seed % 2 else 256
        out = rng.integers(0, levels, (32, 32, 3)) / levels
        ref = rng.integers(0, levels, (32, 32, 3)) / levels
        idx = nearest_indices(out, ref)
        # pure-Python scalar scan on every fourth row
        for x in range(0, 32, 4):
            for y in range(32):
                if tuple(idx[x, y]) != exhaustive_argmin(out, ref, x, y):
                    mismatches += 1
        # every pixel: brute-force distances written out independently, first minimum in row-major order
        full = np.abs(out[:, :, None, None, :] - ref[None, None, :, :, :]).sum(axis=-1).reshape(1024, 1024)
        first_min = np.array([np.flatnonzero(row == row.min())[0] for row in full])
        mismatches += int(np.sum(first_min != idx[..., 0].ravel() * 32 + idx[..., 1].ravel()))
        mismatches += tuple(idx[5, 7]) != find_similar_pixel(out, ref, 5, 7)
    rng = np.random.default_rng(99)
    hr = rng.uniform(size=(256, 256, 3))
    lr_ref, lr_out = block_mean(hr, 8), rng.uniform(size=(32, 32, 3))
    t0 = time.perf_counter()
    select_textures(lr_out, lr_ref, hr)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 1.0
    criterion("texture-selection oracle", ok, f"{mismatches} mismatches over 20 instances; full selection {elapsed:.3f}s < 1s")


def distinct_truth(seed=0):
    rng = np.random.default_rng(seed)
    hr = rng.uniform(size=(256, 256, 3))
    lr = downsample_gt(hr.transpose(2, 0, 1)[None])[0].transpose(1, 2, 0)
    assert len({tuple(p) for p in lr.reshape(-1, 3)}) == 1024
    return hr, lr


def test_selection_identity(criterion):
    truth, lr = distinct_truth(0)
    mask = edge_mask("left", 0.30)
    refs = reference_from_truth(truth, truth * mask[..., None], mask)
    out = decompress(lr, refs, "selection", t=0.0)
    criterion("selection identity", np.array_equal(out, truth), "decompress(selection, t=0) is bit-exact")


def test_finetune_endpoints(criterion):
    rng = np.random.default_rng(1)
    truth = rng.uniform(size=(256, 256, 3))
    mask = edge_mask("top", 0.30)
    refs = reference_from_truth(truth, truth * mask[..., None], mask)
    lr = rng.uniform(size=(32, 32, 3))
    selected = select_textures(lr, refs.lr_reference, refs.hr_reference)
    stretched = stretch_damaged(refs.damaged, mask)
    zero_ok = np.array_equal(decompress(lr, refs, "selection", 0.0), selected)
    full_ok = np.array_equal(decompress(lr, refs, "selection", 3.0), stretched)
    monotone = True
    for seed in range(20):
        r = np.random.default_rng(seed)
        a, b = r.uniform(size=(32, 32, 3)), r.uniform(size=(32, 32, 3))
        ts = np.sort(r.uniform(0, 3, 6))
        taken = [np.all(finetune(a, b, t) == b, axis=-1) & np.any(a != b, axis=-1) for t in ts]
        monotone &= all(np.all(~lo | hi) for lo, hi in zip(taken, taken[1:]))
    ok = zero_ok and full_ok and monotone
    criterion("finetune endpoints", ok, f"t=0 keeps selection {zero_ok}, t=3 takes stretched {full_ok}, monotone {monotone}")


def test_overfit_smoke(criterion):
    # default depth and kernels at channel widths (8, 16, 16) on 32x32 images
    images = scene_images(8, 32, seed=0)
    rng = np.random.default_rng(0)
    masks = np.stack([sample_training_mask(rng, 0.30, 32, 32)[1][None] for _ in range(8)]).astype(np.float32)
    net = build_network(default_spec((8, 16, 16)))
    init_parameters(net, 0)
    opt = AdamState(lr=2e-4)
    weights = LossWeights(w_l1=1.0, w_var=0.1, w_gan=0.0)
    target = downsample_gt(images)
    t0 = time.perf_counter()
    loss, step = np.inf, 0
    while step < 3000:
        train_step(net, images, masks, weights, opt)
        step += 1
        if step % 50 == 0:
            net.eval()
            loss = l1_loss(net.forward(images, masks), target)
            net.train()
            if loss < 0.05:
                break
    elapsed = time.perf_counter() - t0
    ok = loss < 0.05 and elapsed < 1800
    criterion("overfit smoke", ok, f"L1 {loss:.4f} < 0.05 after {step} steps at lr 2e-4, {elapsed:.1f}s")


class Stub:
    def __init__(self, table):
        self.table = table

    def logits(self, image):
        return np.asarray(self.table[int(image.flat[0])], float)


def test_similarity_metric(criterion):
    checks = {}
    rng = np.random.default_rng(0)
    table = {i: rng.standard_normal(7) for i in range(8)}
    imgs = [np.full((2, 2, 3), float(i)) for i in range(8)]
    r = similarity_ratio(imgs, imgs, Stub(table))
    checks["identical"] = r.similarity == r.similarity5 == 1.0

    hand = {0: [2, 0], 1: [2, 0], 2: [0, 2], 3: [2, 0], 4: [0, 2], 5: [0, 2], 6: [2, 0], 7: [0, 2]}
    r = similarity_ratio([imgs[i] for i in (0, 2, 4, 6)], [imgs[i] for i in (1, 3, 5, 7)], Stub(hand))
    checks["hand 2/4"] = r.similarity == 0.5

    ordered = True
    for seed in range(100):
        g = np.random.default_rng(seed)
        t = {i: g.integers(0, 3, 9) for i in range(8)}
        r = similarity_ratio([imgs[i] for i in g.integers(0, 8, 6)], [imgs[i] for i in g.integers(0, 8, 6)], Stub(t))
        ordered &= r.similarity <= r.similarity5
    checks["sim <= sim5"] = ordered

    data, labels = texture_dataset(32, seed=0)
    model, acc = train_toy_classifier(data, labels, len(TEXTURE_CLASSES), seed=0)
    checks["toy accuracy"] = acc >= 0.9
    # end-to-end: noisy copies stay mostly in class, shuffled pairings mostly do not
    noisy = [np.clip(d + np.random.default_rng(i).normal(0, 0.02, d.shape), 0, 1) for i, d in enumerate(data)]
    same = similarity_ratio(noisy, data, model)
    shuffled = similarity_ratio(noisy, [data[i] for i in np.random.default_rng(1).permutation(len(data))], model)
    checks["end-to-end"] = same.similarity > shuffled.similarity and same.similarity <= same.similarity5
    detail = ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
    criterion("similarity metric", all(checks.values()), f"{detail}; toy acc {acc:.3f}; e2e {same.similarity:.3f} vs {shuffled.similarity:.3f}")


def test_adam(criterion):
    worst = 0.0
    for g in (1e-4, 0.3, -2.0, 50.0):
        p = {"w": np.zeros(3)}
        adam_step(p, {"w": np.full(3, g)}, AdamState(lr=1e-3))
        worst = max(worst, float(np.max(np.abs(np.abs(p["w"]) - 1e-3))))
    x = {"x": np.array([1.0])}
    state = AdamState(lr=2e-2)
    steps = 0
    while abs(x["x"][0]) >= 1e-2 and steps < 500:
        adam_step(x, {"x": 2 * x["x"]}, state)
        steps += 1
    ok = worst < 1e-6 and abs(x["x"][0]) < 1e-2
    criterion("adam", ok, f"first-step error {worst:.1e} < 1e-6; x^2 reached |x|<1e-2 in {steps} steps")


def test_checkpoint_round_trip(criterion, tmp_path):
    net = build_network(default_spec((8, 16, 16)))
    init_parameters(net, 3)
    rng = np.random.default_rng(0)
    images = rng.uniform(size=(2, 3, 32, 32)).astype(np.float32)
    masks = np.ones((2, 1, 32, 32), np.float32)
    masks[..., :10] = 0
    opt = AdamState()
    train_step(net, images, masks, LossWeights(1.0, 0.1, 0.0), opt)
    save_checkpoint(tmp_path / "a.ckpt", net, opt)
    net2, opt2, _, _ = load_checkpoint(tmp_path / "a.ckpt")
    net.eval()
    net2.eval()
    same = np.array_equal(net.forward(images, masks), net2.forward(images, masks)) and opt2.t == 1
    raw = bytearray((tmp_path / "a.ckpt").read_bytes())
    raw[1] ^= 0x20
    (tmp_path / "b.ckpt").write_bytes(bytes(raw))
    try:
        read_entries(tmp_path / "b.ckpt")
        rejected = False
    except CheckpointError:
        rejected = True
    criterion("checkpoint round-trip", same and rejected, f"bitwise forward {same}, corrupted header rejected {rejected}")


def test_spectral_norm(criterion):
    u0 = np.array([0.6, 0.8])
    _, _, _, sigma = spectral_normalize(np.diag([3.0, 1.0]), u0, n_iter=20)
    rng = np.random.default_rng(0)
    w = rng.standard_normal((16, 8, 5, 5))
    u = rng.standard_normal(16)
    u /= np.linalg.norm(u)
    for _ in range(20):
        w_sn, u, _, _ = spectral_normalize(w, u)
    top = np.linalg.svd(w_sn.reshape(16, -1), compute_uv=False)[0]
    ok = abs(sigma - 3) / 3 < 0.01 and 0.99 <= top <= 1.01
    criterion("spectral norm", ok, f"diag(3,1) sigma {sigma:.5f}; normalized top singular value {top:.5f}")
