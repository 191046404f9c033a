"""
Command-line harness: train, track, evaluate, check gradients, count
parameters, write synthetic sequences and dump attention maps.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from src.lib.checkpoint import checkpoint_path, latest_checkpoint, load_checkpoint, save_checkpoint
from src.lib.config import ModelConfig, TrackerConfig, TrainConfig, build_config, get_profile
from src.lib.evaluation import evaluate, evaluate_sequences
from src.lib.gradcheck_suite import CASES, run_suite
from src.lib.imageio import write_mask
from src.lib.sequences import frame_name, load_sequence, save_sequence, write_results
from src.lib.synthetic import gen_synthetic
from src.lib.training import HELD_OUT_OFFSET, dtype_for, train_stage1, train_stage2, training_sequences
from src.lib.visualize import attention_inputs, dump_attention
from src.ndtensor.errors import CheckpointError, ConfigurationError, DimensionError, DivergenceError, UsageError
from src.ndtensor.module import count_parameters
from src.ndtensor.tensor import get_default_dtype, set_default_dtype
from src.tracker.tracker import Tracker
from src.transt.fusion import FusionNetwork
from src.transt.model import TransT

LIBRARY_ERRORS = (CheckpointError, ConfigurationError, DimensionError, DivergenceError, UsageError, OSError)


def model_config_for(args: argparse.Namespace) -> ModelConfig:
    config = get_profile(args.profile).model
    if getattr(args, "fusion", None):
        config = config.model_copy(update={"fusion": args.fusion})
    return config


def checkpoint_name(config: ModelConfig, profile: str) -> str:
    return profile if config.fusion == "transformer" else f"{profile}-{config.fusion}"


def load_model(args: argparse.Namespace) -> TransT:
    """Build the profile's network and load `--ckpt`, or the newest checkpoint of that profile."""
    set_default_dtype(dtype_for(args.precision))
    config = model_config_for(args)
    model = TransT(config, seed=args.seed)
    path = Path(args.ckpt) if args.ckpt else latest_checkpoint(checkpoint_name(config, args.profile))
    load_checkpoint(model, path)
    print(f"Loaded checkpoint {path}")
    return model


def tracker_config_for(args: argparse.Namespace, with_mask: bool = False) -> TrackerConfig:
    return build_config(
        TrackerConfig,
        templates=args.m or get_profile(args.profile).templates,
        mode=args.mode,
        w_penalty=args.w_penalty,
        threshold=args.threshold,
        long_term=args.long_term,
        with_mask=with_mask,
    )


def cmd_train(args: argparse.Namespace) -> int:
    config = build_config(
        TrainConfig,
        args.config,
        profile=args.profile,
        seed=args.seed,
        steps=args.steps,
        stage2_steps=args.stage2_steps,
        precision=args.precision,
        workers=args.workers,
        templates=args.m,
    )
    model_config = model_config_for(argparse.Namespace(profile=config.profile, fusion=args.fusion))
    print(f"Starting training on {config.n_train_sequences} synthetic sequences with profile {config.profile}")
    sequences = training_sequences(config)
    if args.stage in ("1", "all"):
        model = train_stage1(config, sequences, model_config).model
    else:
        set_default_dtype(dtype_for(config.precision))
        model = TransT(model_config, seed=config.seed)
        base = Path(args.base) if args.base else latest_checkpoint(checkpoint_name(model_config, config.profile))
        load_checkpoint(model, base)
    if args.stage in ("2", "all"):
        train_stage2(model, config, sequences)
    path = save_checkpoint(model, args.ckpt or checkpoint_path(checkpoint_name(model_config, config.profile)))
    print(f"Model has been saved to {path}.")
    return 0


def cmd_track(args: argparse.Namespace) -> int:
    model = load_model(args)
    frames, gt = load_sequence(args.seq)
    if not gt:
        raise UsageError(f"{args.seq} has no groundtruth.txt to initialize from")
    results = Tracker(model, tracker_config_for(args, with_mask=args.masks is not None)).run(frames, gt[0])
    out = Path(args.out or Path(args.seq) / "results.txt")
    write_results(out, [r.result_line() for r in results])
    if args.masks is not None:
        mask_dir = Path(args.masks)
        mask_dir.mkdir(parents=True, exist_ok=True)
        for i, r in enumerate(results, start=1):
            write_mask(mask_dir / frame_name(i, ".pgm"), r.mask)
    if len(gt) == len(frames):
        print(evaluate([r.box for r in results], gt[1:]))
    print(f"Wrote {len(results)} results to {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args)
    config = tracker_config_for(args, with_mask=args.with_mask)
    if args.seq:
        for seq_dir in args.seq:
            frames, gt = load_sequence(seq_dir)
            if not gt:
                raise UsageError(f"{seq_dir} has no groundtruth.txt; evaluation needs one box per frame")
            results = Tracker(model, config).run(frames, gt[0])
            print(f"{seq_dir}: {evaluate([r.box for r in results], gt[1:])}")
        return 0
    train_config = build_config(TrainConfig, args.config, profile=args.profile, seed=args.seed)
    sequences = training_sequences(train_config, offset=HELD_OUT_OFFSET, count=args.synthetic)
    summary, masks = evaluate_sequences(model, sequences, config, workers=args.workers or 1)
    print(f"{len(sequences)} held-out sequences: {summary}")
    if masks is not None:
        print(f"mean mask IoU {masks:.3f}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_suite(precision=args.precision, seed=args.seed, names=args.only or None)
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:<26} max rel err {r.max_rel_err:.2e}  checked {r.checked:>4}  skipped {r.skipped:>3}  {status}")
    return 0 if all(r.passed for r in results) else 1


def fusion_parameter_count(config: ModelConfig, layers: Optional[int] = None) -> int:
    """Parameters of the reduction convs, N fusion layers and the final cross-attention."""
    n_layers = config.n_layers if layers is None else layers
    rng = np.random.default_rng(0)
    net = FusionNetwork(rng, config.channels, config.d, n_layers, config.n_heads, config.d_ffn, config.use_norm)
    return count_parameters(net)


def cmd_params(args: argparse.Namespace) -> int:
    previous = get_default_dtype()
    set_default_dtype(np.float32)
    try:
        print(fusion_parameter_count(model_config_for(args), args.layers))
    finally:
        set_default_dtype(previous)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    for i in range(args.count):
        seq = gen_synthetic(
            args.seed + i,
            n_frames=args.frames,
            n_distractors=args.distractors,
            motion_sigma=args.motion_sigma,
            jitter=args.jitter,
        )
        target = save_sequence(seq, out if args.count == 1 else out / f"seq_{args.seed + i:04d}")
        print(f"Wrote {len(seq)} frames to {target}")
    return 0


def cmd_dump_attn(args: argparse.Namespace) -> int:
    model = load_model(args)
    seq = gen_synthetic(args.seed, n_frames=max(2, args.frame + 1))
    m = args.m or get_profile(args.profile).templates
    templates, search = attention_inputs(seq, model.config, m, args.frame)
    maps = dump_attention(model, templates, search, args.out)
    for amap in maps:
        print(f"{amap.name:<16} {amap.values.shape[0]}x{amap.values.shape[1]} -> {amap.path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", default="toy", choices=["toy", "paper"], help="model profile")
    common.add_argument("--config", default=None, help="key=value training config file")
    common.add_argument("--seed", type=int, default=0, help="seed for every random procedure")
    common.add_argument("--precision", type=int, default=32, choices=[32, 64], help="floating point width")
    common.add_argument("--workers", type=int, default=None, help="parallel workers (1 = deterministic)")
    common.add_argument("--fusion", default=None, choices=["transformer", "xcorr"], help="fusion variant")

    tracking = argparse.ArgumentParser(add_help=False)
    tracking.add_argument("--ckpt", default=None, help="checkpoint file (default: newest for the profile)")
    tracking.add_argument("--m", type=int, default=None, help="number of templates")
    tracking.add_argument("--mode", default="concat", choices=["concat", "avg"], help="template combination")
    tracking.add_argument("--long-term", action="store_true", help="never update templates")
    tracking.add_argument("--w-penalty", type=float, default=0.49, help="Hanning window weight")
    tracking.add_argument("--threshold", type=float, default=0.75, help="IoU gate for template updates")

    parser = argparse.ArgumentParser(prog="transt", description="Transformer tracking harness")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", parents=[common], help="two-stage training on synthetic sequences")
    train.add_argument("--ckpt", default=None, help="output checkpoint (default: timestamped under checkpoints/)")
    train.add_argument("--base", default=None, help="stage-1 checkpoint for --stage 2")
    train.add_argument("--stage", default="all", choices=["1", "2", "all"])
    train.add_argument("--steps", type=int, default=None, help="stage-1 steps")
    train.add_argument("--stage2-steps", type=int, default=None)
    train.add_argument("--m", type=int, default=None, help="templates per training pair")
    train.set_defaults(func=cmd_train)

    track = sub.add_parser("track", parents=[common, tracking], help="track one sequence directory")
    track.add_argument("--seq", required=True, help="directory of PPM frames and groundtruth.txt")
    track.add_argument("--out", default=None, help="results file (default: <seq>/results.txt)")
    track.add_argument("--masks", default=None, help="directory for predicted PGM masks")
    track.set_defaults(func=cmd_track)

    ev = sub.add_parser("eval", parents=[common, tracking], help="one-pass evaluation")
    ev.add_argument("--seq", nargs="*", default=None, help="sequence directories (default: held-out synthetic)")
    ev.add_argument("--synthetic", type=int, default=20, help="number of held-out synthetic sequences")
    ev.add_argument("--with-mask", action="store_true", help="also report mean mask IoU")
    ev.set_defaults(func=cmd_eval)

    grad = sub.add_parser("gradcheck", help="finite-difference check of every op and block")
    grad.add_argument("--precision", type=int, default=64, choices=[32, 64])
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--only", nargs="*", choices=sorted(CASES), help="subset of checks")
    grad.set_defaults(func=cmd_gradcheck)

    params = sub.add_parser("params", help="parameter count of the fusion stack")
    params.add_argument("--profile", default="toy", choices=["toy", "paper"])
    params.add_argument("--layers", type=int, default=None, help="fusion layers N (default: profile)")
    params.set_defaults(func=cmd_params)

    synth = sub.add_parser("synth", help="write synthetic sequences")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    synth.add_argument("--count", type=int, default=1)
    synth.add_argument("--frames", type=int, default=60)
    synth.add_argument("--distractors", type=int, default=2)
    synth.add_argument("--motion-sigma", type=float, default=2.0)
    synth.add_argument("--jitter", type=float, default=0.1)
    synth.set_defaults(func=cmd_synth)

    dump = sub.add_parser("dump-attn", parents=[common, tracking], help="write attention maps as PGM")
    dump.add_argument("--out", required=True)
    dump.add_argument("--frame", type=int, default=1, help="synthetic frame used as search region")
    dump.set_defaults(func=cmd_dump_attn)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Argument errors exit 2 through argparse; library errors exit 1."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LIBRARY_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
