"""Command-line entry point: simulate | preprocess | isp | train | infer | eval.

Exit status: 0 ok, 1 usage, 2 validation, 3 runtime. Failures print one line
``error[<CODE>]: <message>`` on stderr, with CODE one of E_USAGE,
E_VALIDATION, E_RUNTIME.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .diffusion import DiffusionModel, GuidanceConfig, sample_batch, train
from .isp import run_pipeline, write_ppm
from .metrics import evaluate
from .nn import CheckpointError, TrainingError
from .raw import CFAPattern, DimensionError, FormatError, ParameterError, preprocess, read_braw
from .sim import MANIFEST_NAME, make_dataset, read_manifest

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3
_CODES = {EXIT_USAGE: "E_USAGE", EXIT_VALIDATION: "E_VALIDATION", EXIT_RUNTIME: "E_RUNTIME"}


class CliError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, f"{self.prog}: {message}")


def _validation(msg):
    return CliError(EXIT_VALIDATION, msg)


def _need_file(path, what) -> Path:
    path = Path(path)
    if not path.is_file():
        raise _validation(f"{what} not found: {path}")
    return path


def _manifest_path(arg, cfg: RunConfig) -> Path:
    return _need_file(arg or Path(cfg.paths.dataset_dir) / MANIFEST_NAME, "manifest")


def _pair_rows(manifest: Path):
    rows = read_manifest(manifest)
    if not rows:
        raise _validation(f"manifest lists no pairs: {manifest}")
    return rows


# ---------------------------------------------------------------- commands

def cmd_simulate(args, cfg: RunConfig):
    s = cfg.sim
    params = cfg.noise_params()
    isp = cfg.isp_config()
    pattern = CFAPattern.parse(s.pattern)
    if s.eval_scenes and not cfg.paths.eval_dir:
        raise _validation("[sim] eval_scenes > 0 needs [paths] eval_dir")
    rows = make_dataset(s.n_scenes, s.ratios, params, cfg.paths.dataset_dir, s.width, s.height, pattern, isp)
    print(f"wrote {len(rows)} pairs to {Path(cfg.paths.dataset_dir) / MANIFEST_NAME}")
    if s.eval_scenes:
        # held-out scenes continue the scene index so they never repeat a training scene
        rows = make_dataset(s.eval_scenes, s.ratios, params, cfg.paths.eval_dir, s.width, s.height, pattern, isp,
                            first_scene=s.n_scenes)
        print(f"wrote {len(rows)} held-out pairs to {Path(cfg.paths.eval_dir) / MANIFEST_NAME}")


def cmd_preprocess(args, cfg: RunConfig):
    img = read_braw(_need_file(args.braw, "RAW file"))
    if not args.alpha > 0:
        raise _validation(f"--alpha must be positive, got {args.alpha}")
    out = preprocess(img, args.alpha)
    dest = Path(args.out)
    if dest.suffix != ".npy":
        raise _validation(f"--out must end in .npy, got {dest}")
    dest.parent.mkdir(parents=True, exist_ok=True)
    np.save(dest, out)
    print(f"wrote {dest} {out.shape[0]}x{out.shape[1]}x{out.shape[2]}")


def cmd_isp(args, cfg: RunConfig):
    isp = cfg.isp_config()
    if args.manifest:
        rows = _pair_rows(_need_file(args.manifest, "manifest"))
        out_dir = Path(args.out_dir or cfg.paths.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for r in rows:
            write_ppm(run_pipeline(read_braw(r["noisy"]), isp, r["ratio"]), out_dir / f"{r['pair_id']}.ppm")
        print(f"wrote {len(rows)} baseline images to {out_dir}")
        return
    if not args.braw or not args.out:
        raise CliError(EXIT_USAGE, "isp: give a RAW file and --out, or --manifest")
    if not args.alpha > 0:
        raise _validation(f"--alpha must be positive, got {args.alpha}")
    img = read_braw(_need_file(args.braw, "RAW file"))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_ppm(run_pipeline(img, isp, args.alpha), args.out)
    print(f"wrote {args.out}")


def cmd_train(args, cfg: RunConfig):
    manifest = _manifest_path(args.manifest, cfg)
    _pair_rows(manifest)
    tcfg = cfg.train_config()
    model = DiffusionModel(cfg.arch(), seed=cfg.model.seed)
    out = Path(cfg.paths.checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())
    res = train(model, manifest, tcfg, out)
    first, last = res.val_losses[0], res.val_losses[max(res.val_losses)]
    print(f"trained {tcfg.steps} steps; validation loss {first:.4f} -> {last:.4f}; checkpoint {res.checkpoint}")


def _load_model(path) -> DiffusionModel:
    return DiffusionModel.load(_need_file(path, "checkpoint"))


def cmd_infer(args, cfg: RunConfig):
    g = cfg.guidance
    guidance = GuidanceConfig(g.s_image if args.s_image is None else args.s_image,
                              g.s_text if args.s_text is None else args.s_text)
    seed = g.seed if args.seed is None else args.seed
    alpha = g.alpha if args.alpha is None else args.alpha
    ckpt = args.checkpoint or Path(cfg.paths.checkpoint_dir) / "model.drck"
    if args.manifest:
        rows = _pair_rows(_need_file(args.manifest, "manifest"))
        jobs = [(r["noisy"], alpha or r["ratio"], Path(args.out_dir or cfg.paths.output_dir) / f"{r['pair_id']}.ppm")
                for r in rows]
    else:
        if not args.braw or not args.out:
            raise CliError(EXIT_USAGE, "infer: give a RAW file and --out, or --manifest")
        if not alpha > 0:
            raise _validation("infer on a single file needs --alpha (or [guidance] alpha) > 0")
        jobs = [(_need_file(args.braw, "RAW file"), alpha, Path(args.out))]
    model = _load_model(ckpt)
    conds = []
    for braw, a, _ in jobs:
        c = preprocess(read_braw(braw), a)
        try:
            model.check_image_shape(*c.shape[:2])
        except ValueError as e:
            raise _validation(f"{braw}: {e}") from None
        conds.append(c)
    # same-size images are sampled together; the k-th batch uses seed + k
    by_shape = {}
    for i, c in enumerate(conds):
        by_shape.setdefault(c.shape, []).append(i)
    bs = max(1, args.batch)
    k = 0
    for idx in by_shape.values():
        for j in range(0, len(idx), bs):
            part = idx[j:j + bs]
            outs = sample_batch(model, np.stack([conds[i] for i in part]), [g.prompt_id] * len(part), guidance,
                                g.steps, seed + k)
            k += 1
            for i, img in zip(part, outs):
                jobs[i][2].parent.mkdir(parents=True, exist_ok=True)
                write_ppm(img, jobs[i][2])
    print(f"wrote {len(jobs)} image(s)")


def cmd_eval(args, cfg: RunConfig):
    manifest = _manifest_path(args.manifest, cfg)
    outputs = Path(args.outputs or cfg.paths.output_dir)
    if not outputs.is_dir():
        raise _validation(f"outputs directory not found: {outputs}")
    report_path = Path(args.report) if args.report else outputs / "report.tsv"
    try:
        report = evaluate(manifest, outputs, report_path)
    except FileNotFoundError as e:
        raise _validation(str(e)) from None
    print(report.summary())
    print(f"report written to {report_path}")


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rawdiff", description="Low-light RAW to sRGB with a toy latent diffusion model.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = _Parser(add_help=False)
    common.add_argument("-c", "--config", help="INI run config")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic paired dataset")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("preprocess", parents=[common], help="pack, normalize, amplify and upsample a .braw")
    s.add_argument("braw")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--out", required=True, help=".npy destination (H x W x 4 float64)")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("isp", parents=[common], help="traditional ISP baseline to PPM")
    s.add_argument("braw", nargs="?")
    s.add_argument("--alpha", type=float, default=1.0, help="exposure scale applied before the ISP")
    s.add_argument("--out")
    s.add_argument("--manifest", help="render every pair, amplified by its ratio")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_isp)

    s = sub.add_parser("train", parents=[common], help="pretrain the autoencoder, then train the denoiser")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", parents=[common], help="sample sRGB images from RAW conditioning")
    s.add_argument("braw", nargs="?")
    s.add_argument("--checkpoint")
    s.add_argument("--alpha", type=float)
    s.add_argument("--s-image", type=float)
    s.add_argument("--s-text", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--manifest")
    s.add_argument("--out-dir")
    s.add_argument("--batch", type=int, default=8, help="images sampled per batch")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", parents=[common], help="PSNR/SSIM of outputs against references")
    s.add_argument("--manifest")
    s.add_argument("--outputs")
    s.add_argument("--report")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise CliError(EXIT_USAGE, "rawdiff: a subcommand is required")
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
        try:
            cfg = load_config(args.config, args.set)
        except ConfigError as e:
            raise _validation(str(e)) from None
        args.func(args, cfg)
        return EXIT_OK
    except CliError as e:
        status, msg = e.status, str(e)
    except (ConfigError, ParameterError, DimensionError, FormatError, CheckpointError) as e:
        status, msg = EXIT_VALIDATION, str(e)
    except (TrainingError, OSError, ValueError, RuntimeError) as e:
        status, msg = EXIT_RUNTIME, str(e)
    print(f"error[{_CODES[status]}]: {msg}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
