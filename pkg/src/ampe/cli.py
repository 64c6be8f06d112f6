"""Command-line interface.

Subcommands: synth (write a synthetic dataset), train (either phase),
derain (single image → result images per α), eval (PSNR/SSIM report with
figure), serve (local HTTP endpoint + viewer), dump-maps (diagnostic
panel of every intermediate map).

The run-artifact root defaults to ./runs and can be redirected with the
AMPE_HOME environment variable.
"""

import argparse
import datetime
import json
import logging
import os
import sys
import uuid
from importlib import resources

import numpy as np

from .errors import CheckpointError, ConfigError, DatasetError, ShapeError, TrainingError
from .figures import save_eval_figure, save_loss_curve, save_maps_panel
from .images import load_image, save_image, to_float, to_uint8
from .metrics import evaluate_triples, write_reports
from .pipeline import derain_arrays, load_bundle
from .rainmodel import alpha_blend
from .synth import SynthParams, generate_dataset, read_dataset, write_dataset
from .training import TrainConfig, train_locnet, train_main

logger = logging.getLogger("ampe.cli")


def artifact_root():
    return os.path.join(os.environ.get("AMPE_HOME", os.getcwd()), "runs")


def format_alpha(alpha):
    return str(float(alpha))


def _parse_alphas(args):
    if getattr(args, "alpha", None) is not None and getattr(args, "alphas", None):
        raise ConfigError("pass either --alpha or --alphas, not both")
    if getattr(args, "alpha", None) is not None:
        values = [args.alpha]
    elif getattr(args, "alphas", None):
        try:
            values = [float(tok) for tok in args.alphas.split(",") if tok.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --alphas value: {exc}") from exc
    else:
        values = [0.9]
    for a in values:
        if not 0.0 <= a <= 1.0:
            raise ConfigError(f"alpha {a} outside [0, 1]")
    return values


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    doc = _load_json(args.config) if args.config else {}
    known = {"count", "height", "width", "params"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown dataset config field(s): {sorted(unknown)}")
    count = int(doc.get("count", 4))
    shape = (int(doc.get("height", 64)), int(doc.get("width", 64)))
    pdict = dict(doc.get("params", {}))
    if args.seed is not None:
        pdict["seed"] = args.seed
    params = SynthParams.from_dict(pdict)
    triples = generate_dataset(params, count, shape)
    write_dataset(triples, args.out, params)
    print(f"wrote {count} samples ({shape[0]}x{shape[1]}) to {args.out}")
    return 0


def _train_config_from_args(args):
    doc = _load_json(args.config) if args.config else {}
    doc["phase"] = args.phase
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.no_locnet:
        doc["use_locnet"] = False
    if args.no_estnet_t:
        doc["use_estnet_t"] = False
    if args.no_loss_l2:
        doc["use_loss_l2"] = False
    return TrainConfig.from_dict(doc)


def cmd_train(args):
    config = _train_config_from_args(args)
    dataset = read_dataset(args.dataset)
    if config.phase == "locnet":
        _, records = train_locnet(dataset, config, out_dir=args.out)
    else:
        prior = args.checkpoint
        if config.use_locnet and prior is None:
            raise CheckpointError(
                "phase 'main' needs --checkpoint pointing at the phase 'locnet' output; "
                "run `ampe train --phase locnet` first"
            )
        _, records = train_main(dataset, prior, config, out_dir=args.out)
    curve = save_loss_curve(records, os.path.join(args.out, "loss_curve.png"))
    print(f"trained phase={config.phase} steps={len(records)} "
          f"final_loss={records[-1]['value']:.6f} checkpoint={args.out} curve={curve}")
    return 0


def cmd_derain(args):
    bundle = load_bundle(args.checkpoint)
    alphas = _parse_alphas(args)
    out_dir = args.out or os.path.join(artifact_root(), uuid.uuid4().hex[:12])
    os.makedirs(out_dir, exist_ok=True)
    image = load_image(args.input)
    maps = derain_arrays(bundle, image)
    outputs = {}

    def _save(name, arr):
        path = os.path.join(out_dir, name)
        save_image(path, np.clip(arr, 0.0, 1.0))
        outputs[name] = name

    _save("input.png", image)
    _save("bm.png", maps["b_m"])
    _save("refined.png", maps["refined"])
    # blends are computed from the already-quantized images so that the files
    # are exactly reconstructible from bm.png + refined.png + α
    bm_q = to_float(to_uint8(np.clip(maps["b_m"], 0.0, 1.0)))
    ref_q = to_float(to_uint8(np.clip(maps["refined"], 0.0, 1.0)))
    for alpha in alphas:
        _save(f"blend_{format_alpha(alpha)}.png", alpha_blend(bm_q, ref_q, alpha))
    manifest = {
        "run_id": os.path.basename(os.path.normpath(out_dir)),
        "input": os.path.abspath(args.input),
        "checkpoint": os.path.abspath(args.checkpoint),
        "alphas": [float(a) for a in alphas],
        "outputs": sorted(outputs),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(outputs)} images to {out_dir}")
    return 0


def cmd_eval(args):
    bundle = load_bundle(args.checkpoint)
    alphas = _parse_alphas(args)
    triples = read_dataset(args.dataset)
    if not triples:
        raise DatasetError(f"no samples found under {args.dataset}")
    out_dir = args.out or os.path.join(artifact_root(), "eval")
    reports = evaluate_triples(bundle, triples, alphas)
    json_path, csv_path = write_reports(reports, out_dir)
    fig_path = save_eval_figure(reports, os.path.join(out_dir, "report.png"))
    for report in reports:
        print(f"alpha={format_alpha(report.alpha)} mean_psnr={report.mean_psnr:.6f} "
              f"mean_ssim={report.mean_ssim:.6f} images={len(report.rows)}")
    print(f"report: {json_path} {csv_path} {fig_path}")
    return 0


def cmd_serve(args):
    from .server import serve_forever

    bundle = load_bundle(args.checkpoint)
    bundle.require_joint()
    runs_root = os.path.join(artifact_root(), "server")
    static_dir = None
    for candidate in (os.path.join(os.getcwd(), "frontend", "dist"),):
        if os.path.isfile(os.path.join(candidate, "index.html")):
            static_dir = candidate
            break
    if static_dir is None:
        static_dir = str(resources.files("ampe") / "static")
    print(f"serving checkpoint {args.checkpoint} on http://127.0.0.1:{args.port} "
          f"(static: {static_dir})")
    serve_forever(bundle, args.port, runs_root, static_dir)
    return 0


def cmd_dump_maps(args):
    bundle = load_bundle(args.checkpoint)
    out_dir = args.out or os.path.join(artifact_root(), "maps")
    os.makedirs(out_dir, exist_ok=True)
    image = load_image(args.input)
    maps = derain_arrays(bundle, image)
    save_image(os.path.join(out_dir, "input.png"), image)
    for name in ("loc", "t_hat", "r_hat", "b_m", "refined"):
        save_image(os.path.join(out_dir, f"{name}.png"), np.clip(maps[name], 0.0, 1.0))
    panel = save_maps_panel(image, maps, os.path.join(out_dir, "diagnostics.png"))
    print(f"wrote maps and {panel} to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="ampe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic rain dataset")
    p.add_argument("--config", help="dataset JSON: count, height, width, params")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run one training phase")
    p.add_argument("--phase", required=True, choices=["locnet", "main"])
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="training config JSON")
    p.add_argument("--checkpoint", help="phase 'locnet' output (required for phase 'main')")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-locnet", action="store_true", help="ablation: constant 0.5 guide")
    p.add_argument("--no-estnet-t", action="store_true", help="ablation: transmission fixed to 1")
    p.add_argument("--no-loss-l2", action="store_true", help="ablation: inversion loss on all steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("derain", help="derain one PNG at one or more blend constants")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--alphas", help="comma list, e.g. 1.0,0.6,0.3,0.0")
    p.add_argument("--out")
    p.set_defaults(func=cmd_derain)

    p = sub.add_parser("eval", help="PSNR/SSIM report over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--alphas")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="HTTP endpoint + viewer")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("dump-maps", help="write every intermediate map plus a panel figure")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dump_maps)

    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ShapeError, DatasetError, CheckpointError, TrainingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
