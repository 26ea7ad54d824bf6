"""Command-line interface.

Exit status: 0 success, 2 bad argument, 3 malformed file or I/O failure,
4 shape/parameter mismatch, 5 numerical failure (e.g. NaN loss).
"""

import argparse
import sys

import numpy as np

from . import checkpoint, pnm
from .account import branch_freq_proportion, cost_report, psnr
from .data import lr_batch
from .errors import ArgumentError, FormatError, ShapeError, TribranchError
from .layer import (
    DEFAULT_RANK,
    DEFAULT_SPARSITY_MULT,
    DEFAULT_UPSAMPLE,
    ThreeBranchLayer,
    ToyModel,
    body_step,
    centre_features,
    compress_model,
    compress_stack,
    layer_forward,
    make_toy_teacher,
    model_forward,
)
from .train import TrainConfig, train_toy

EXIT_IO = 3
# Plain gradient descent at desk scale needs a far larger step than the
# full-scale Adam setting; 1e-2 halves the toy distillation loss in 200 steps.
TOY_LEARNING_RATE = 1e-2
TOY_BATCH = 8
TOY_LR_SIZE = 16


def _load_toy(path) -> ToyModel:
    return ToyModel.from_layers(checkpoint.read_bmc(path), DEFAULT_UPSAMPLE)


def _dims(text: str) -> tuple[int, int, int]:
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected c,h,w, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive integers c,h,w, got {text!r}")
    return dims


def cmd_compress(args) -> int:
    layers = checkpoint.read_fpw(args.inp)
    if args.rank < 1:
        raise ArgumentError(f"--rank must be >= 1, got {args.rank}")
    new_layers, reports = compress_stack(layers, args.rank, args.sparsity_mult)
    checkpoint.write_bmc(args.out, new_layers)
    for i, rep in reports:
        print(f"layer {i} res_ours {rep.frob_sq_ours!r} res_direct {rep.frob_sq_direct!r}")
    return 0


def cmd_infer(args) -> int:
    model = _load_toy(args.model)
    img = pnm.read_pnm(args.inp)
    out = model_forward(model, pnm.to_tensor(img))
    if out.shape[1] != img.shape[0]:
        raise ShapeError(f"model produces {out.shape[1]} channels, input image has {img.shape[0]}")
    pnm.write_pnm(args.out, pnm.from_tensor(out))
    return 0


def cmd_report(args) -> int:
    model = _load_toy(args.model)
    sys.stdout.write(cost_report(model, args.input_dims).to_text())
    return 0


def cmd_train_toy(args) -> int:
    teacher = ToyModel.from_layers(checkpoint.read_fpw(args.teacher), DEFAULT_UPSAMPLE)
    student, _ = compress_model(teacher, DEFAULT_RANK, DEFAULT_SPARSITY_MULT)
    cfg = TrainConfig(learning_rate=TOY_LEARNING_RATE, iterations=args.iters, batch=TOY_BATCH, seed=args.seed)
    data = lr_batch(cfg.seed, batch=cfg.batch, lr_size=TOY_LR_SIZE, channels=teacher.head.in_channels)
    train_toy(student, teacher, data, cfg, log=lambda i, loss: print(f"iter {i} loss {loss!r}", flush=True))
    print(f"psnr_vs_teacher {psnr(model_forward(student, data), model_forward(teacher, data))!r}")
    checkpoint.write_bmc(args.out, student.layers)
    return 0


def cmd_analyze(args) -> int:
    model = _load_toy(args.model)
    layers = model.layers
    if not 0 <= args.layer < len(layers):
        raise ArgumentError(f"--layer {args.layer} out of range [0, {len(layers)})")
    target = layers[args.layer]
    if not isinstance(target, ThreeBranchLayer) or target.conv is None:
        raise ArgumentError(f"layer {args.layer} is not a three-branch conv layer")
    x = pnm.to_tensor(pnm.read_pnm(args.inp))
    if x.shape[1] != model.head.in_channels:
        raise ShapeError(f"image has {x.shape[1]} channels, model expects {model.head.in_channels}")
    h, _ = centre_features(layer_forward(model.head, x))
    for layer in model.body[: args.layer - 1]:
        h = body_step(layer, h)
    p = branch_freq_proportion(target, h)
    print(f"layer {args.layer} bmb {p[0]!r} lrmb {p[1]!r} smb {p[2]!r}")
    return 0


def cmd_make_teacher(args) -> int:
    checkpoint.write_fpw(args.out, make_toy_teacher(args.seed).layers)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tribranch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="decoupled-init every interior layer of an FPW0 stack")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rank", type=int, default=DEFAULT_RANK)
    p.add_argument("--sparsity-mult", type=int, default=DEFAULT_SPARSITY_MULT)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("infer", help="run a BMC1 toy model on a P5/P6 image (4x upsample)")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("report", help="print the Params/OPs cost report")
    p.add_argument("--model", required=True)
    p.add_argument("--input-dims", type=_dims, default=(3, 64, 64))
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("train-toy", help="distill an FPW0 teacher into a three-branch student")
    p.add_argument("--teacher", required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("analyze", help="per-branch high-frequency proportions of one layer")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--layer", type=int, required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("make-teacher", help="write a random toy teacher as FPW0")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_teacher)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TribranchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
