"""Command-line entry point: train, inpaint, eval, maskgen, gradcheck."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .compression_net import build_network, init_parameters, load_arch
from .config import RunConfig, load_config
from .decompression import decompress, reference_from_damaged, reference_from_truth
from .discriminator import Discriminator
from .gradcheck import run_suite
from .imageio import DatasetIndex, from_nchw, load_image, load_mask, save_image, save_mask, to_nchw
from .masks import SIDES, edge_mask, irregular_mask, missing_fraction, rect_mask, sample_training_mask
from .metrics import ToyClassifier, format_rows, image_l1, image_l2, similarity_ratio, train_toy_classifier
from .optim import AdamState
from .trainer import LossWeights, train_step

log = logging.getLogger("cdinpaint")


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        out["seed"] = str(args.seed)
    return out


def _config(args) -> RunConfig:
    path = getattr(args, "config", None)
    if path and not Path(path).is_file():
        raise SystemExit(f"config file {path} not found")
    return load_config(path, _overrides(args))


def cmd_train(args) -> int:
    cfg = _config(args)
    if not cfg.data_dir:
        raise SystemExit("train: data_dir is not set")
    data = DatasetIndex.scan(cfg.data_dir, cfg.image_size)
    if cfg.resume:
        net, opt, disc, disc_opt = ckpt.load_checkpoint(cfg.resume)
    else:
        specs = load_arch(cfg.arch) if cfg.arch else None
        net = build_network(specs, gate=cfg.gate, slope=cfg.leaky_slope)
        init_parameters(net, cfg.seed_for("init"))
        opt, disc, disc_opt = None, None, None
    if cfg.image_size % net.downsample_factor:
        raise SystemExit(f"image_size {cfg.image_size} not divisible by {net.downsample_factor}")
    opt = opt or AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    weights = LossWeights(cfg.w_l1, cfg.w_var, cfg.w_gan)
    if cfg.w_gan > 0 and disc is None:
        disc = Discriminator(cfg.disc_channel_tuple, slope=cfg.leaky_slope)
        disc.init_parameters(cfg.seed_for("disc"))
    if disc is not None and disc_opt is None:
        disc_opt = AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)

    mask_rng = np.random.default_rng(cfg.seed_for("masks"))
    order_rng = np.random.default_rng(cfg.seed_for("shuffle"))
    size = cfg.image_size
    done = 0
    with open(cfg.log, "w", buffering=1, encoding="utf-8") as log_file:
        log_file.write("# step l1 var gan_g gan_d total\n")
        while done < cfg.steps:
            for batch in data.batches(cfg.batch_size, order_rng.permutation(len(data))):
                images = np.stack([to_nchw(data.load(i))[0] for i in batch])
                masks = np.stack(
                    [sample_training_mask(mask_rng, cfg.mask_fraction, size, size)[1][None] for _ in batch]
                ).astype(np.float32)
                report = train_step(net, images, masks, weights, opt, disc, disc_opt)
                log_file.write(report.log_line() + "\n")
                done += 1
                if done % cfg.checkpoint_every == 0 or done == cfg.steps:
                    ckpt.save_checkpoint(cfg.checkpoint, net, opt, disc, disc_opt)
                if done == cfg.steps:
                    break
    print(f"trained {done} steps; checkpoint {cfg.checkpoint}; log {cfg.log}")
    return 0


def cmd_inpaint(args) -> int:
    cfg = _config(args)
    for p in (args.image, args.mask, args.checkpoint):
        if not Path(p).is_file():
            raise SystemExit(f"inpaint: {p} not found")
    mode = args.mode or cfg.mode
    t = cfg.threshold if args.threshold is None else args.threshold
    size = cfg.image_size
    image = load_image(args.image, size)
    mask = load_mask(args.mask, size)
    net, *_ = ckpt.load_checkpoint(args.checkpoint)
    net.eval()
    lr = from_nchw(net.forward(to_nchw(image), to_nchw(mask.astype(np.float32))))
    block = size // lr.shape[0]
    damaged = image * mask[..., None]
    refs = None
    if mode == "selection":
        if args.truth:
            refs = reference_from_truth(load_image(args.truth, size), damaged, mask, block)
        else:
            refs = reference_from_damaged(damaged, mask, block)
    hr = decompress(lr, refs, mode, t, block)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_image(lr, out / "lr_output.png")
    save_image(hr, out / "output.png")
    print(f"wrote {out / 'lr_output.png'} and {out / 'output.png'}")
    return 0


def cmd_eval(args) -> int:
    outputs, truths = Path(args.outputs), Path(args.truths)
    for d in (outputs, truths):
        if not d.is_dir():
            raise SystemExit(f"eval: directory {d} not found")
    names = sorted(p.name for p in outputs.glob("*.png"))
    missing = [n for n in names if not (truths / n).is_file()]
    if missing:
        raise SystemExit(f"eval: no ground truth for {missing[:5]}")
    if not names:
        raise SystemExit(f"eval: no PNG files in {outputs}")
    outs = [load_image(outputs / n, None) for n in names]
    gts = [load_image(truths / n, None) for n in names]
    l1 = [image_l1(a, b) for a, b in zip(outs, gts)]
    l2 = [image_l2(a, b) for a, b in zip(outs, gts)]
    if args.classifier:
        cn = ToyClassifier.from_state_dict(ckpt.read_entries(args.classifier))
        report = similarity_ratio(outs, gts, cn)
        s1, s5 = [float(v) for v in report.top1], [float(v) for v in report.top5]
        summary = (report.similarity, report.similarity5)
    else:
        s1 = s5 = [None] * len(names)
        summary = (None, None)
    rows = [(n, a, b, c, d) for n, a, b, c, d in zip(names, l1, l2, s1, s5)]
    rows.append(("mean", float(np.mean(l1)), float(np.mean(l2)), *summary))
    text = format_rows(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_maskgen(args) -> int:
    h = w = args.size
    if args.kind == "edge":
        if args.side is None:
            raise SystemExit("maskgen: --side is required for edge masks")
        mask = edge_mask(args.side, args.fraction, h, w)
    elif args.kind == "rect":
        if not args.rect:
            raise SystemExit("maskgen: --rect x0,y0,h,w is required for rect masks")
        x0, y0, hh, ww = (int(v) for v in args.rect.split(","))
        mask = rect_mask(x0, y0, hh, ww, h, w)
    else:
        mask = irregular_mask(args.seed, args.fraction, h, w)
    save_mask(mask, args.out)
    print(f"wrote {args.out}: {np.count_nonzero(mask == 0)} missing pixels ({missing_fraction(mask):.4f})")
    return 0


def cmd_gradcheck(args) -> int:
    t0 = time.perf_counter()
    results = run_suite()
    for r in results:
        print(r.line())
    print(f"total {time.perf_counter() - t0:.1f}s")
    return 0 if all(r.ok for r in results) else 1


def cmd_train_classifier(args) -> int:
    if args.data:
        root = Path(args.data)
        classes = sorted(d for d in root.iterdir() if d.is_dir())
        images, labels = [], []
        for label, d in enumerate(classes):
            for p in sorted(d.glob("*.png")):
                images.append(load_image(p, None))
                labels.append(label)
        n_classes = len(classes)
    else:
        from .synthetic import TEXTURE_CLASSES, texture_dataset

        images, labels = texture_dataset(32, seed=args.seed)
        n_classes = len(TEXTURE_CLASSES)
    model, acc = train_toy_classifier(images, labels, n_classes, seed=args.seed, steps=args.steps)
    ckpt.write_entries(args.out, model.state_dict())
    print(f"train accuracy {acc:.3f}; wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdinpaint", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the compression network")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("inpaint", help="repair one image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=("selection", "baseline"))
    p.add_argument("--truth", help="consult ground truth for texture selection")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("eval", help="L1/L2/similarity rows for output vs truth directories")
    p.add_argument("--outputs", required=True)
    p.add_argument("--truths", required=True)
    p.add_argument("--classifier")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("maskgen", help="write a mask PNG")
    p.add_argument("--kind", choices=("edge", "rect", "irregular"), required=True)
    p.add_argument("--side", choices=SIDES)
    p.add_argument("--fraction", type=float, default=0.30)
    p.add_argument("--rect", help="x0,y0,h,w")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_maskgen)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-classifier", help="train the toy similarity classifier")
    p.add_argument("--data", help="directory with one subdirectory of PNGs per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_classifier)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, ckpt.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
