"""Command line interface: ``opennae {synth,augment,train,eval,sweep}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import augment as aug
from .kernels import BACKEND
from .metrics import ClosedSetError, compute_oroc, export_curve, rank1, tpir_at_fpir
from .models import (NAE_HIDDEN, NAN_EPOCHS, default_ensemble_size, load_model, save_model,
                     score, train_ensemble, train_nan)
from .nn import TrainConfig
from .store import load_embeddings, save_embeddings
from .synth import SynthSpec, generate

log = logging.getLogger("opennae")

SWEEP_GRIDS = {
    "hidden": list(range(32, 257, 16)),
    "ensemble-size": [0.10, 0.30, 0.50, 0.75, 1.00],
    "margin": [0.1, 0.2, 0.3, 0.4, 0.5],
    "lambda": [0.55, 0.65, 0.75, 0.85, 0.95],
}


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _float_list(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _add_normalize(p):
    p.add_argument("--normalize", type=_on_off, default=True, metavar="{on,off}",
                   help="L2-normalize embeddings on load (default: on)")


def _add_training(p):
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--negative-ratio", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)


def _train_config(args, default_epochs: int) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, momentum=args.momentum, batch_size=args.batch_size,
                       epochs=args.epochs or default_epochs, seed=args.seed,
                       negative_ratio=args.negative_ratio)


def cmd_synth(args) -> int:
    spec = SynthSpec(args.dim, args.known, args.unknown, args.samples, args.spread, args.seed)
    gallery, probes = generate(spec)
    save_embeddings(gallery, args.out_gallery)
    save_embeddings(probes, args.out_probes)
    log.info("wrote %d gallery and %d probe records", len(gallery), len(probes))
    return 0


def cmd_augment(args) -> int:
    if args.method == "none":
        raise ValueError("method 'none' produces no negatives; omit --negatives when training")
    gallery = load_embeddings(args.gallery, kind="gallery", normalize=args.normalize)
    lam = aug.DEFAULT_LAMBDA if args.lam is None else args.lam
    config = aug.AugmentConfig(args.method, lam, args.sigma, args.count, args.seed)
    negatives = aug.generate(gallery, config)
    save_embeddings(negatives.to_probeset(), args.out)
    log.info("wrote %d %s negatives", len(negatives), args.method)
    return 0


def _load_negatives(path):
    if path is None:
        return None
    # never normalized: that would move mix-up negatives off their segment
    return aug.NegativeSet.from_collection(load_embeddings(path, kind="probes"))


def cmd_train(args) -> int:
    gallery = load_embeddings(args.gallery, kind="gallery", normalize=args.normalize)
    negatives = _load_negatives(args.negatives)
    if args.model == "nae":
        config = _train_config(args, 100)
        model = train_ensemble(gallery, negatives, args.loss, args.margin, config,
                               args.ensemble_size, args.hidden or NAE_HIDDEN,
                               args.aggregate, args.jobs)
    else:
        config = _train_config(args, NAN_EPOCHS)
        hidden = (512, 128) if args.hidden is None else (args.hidden, 128)
        model = train_nan(gallery, negatives, args.loss, args.margin, config, hidden)
    save_model(model, args.out_model)
    log.info("saved %s model to %s", args.model, args.out_model)
    return 0


def _read_labels(path) -> dict[str, str]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows and rows[0][:2] == ["sample", "subject"]:
        rows = rows[1:]
    return {r[0]: r[1] for r in rows}


def format_table(rows: dict[str, dict[float, float]], fpir_points) -> str:
    head = f"{'Method':<16}" + "".join(f"{'FPIR=' + format(f, 'g'):>12}" for f in fpir_points)
    lines = [head, "-" * len(head)]
    for name, vals in rows.items():
        lines.append(f"{name:<16}" + "".join(f"{vals[f]:>12.4f}" for f in fpir_points))
    return "\n".join(lines)


def cmd_eval(args) -> int:
    probes = load_embeddings(args.probes, kind="probes", normalize=args.normalize)
    labels = list(probes.labels)
    if args.labels:
        mapping = _read_labels(args.labels)
        labels = [mapping.get(s, lab) for s, lab in zip(probes.samples, labels)]
    if args.model == "cos":
        if not args.gallery:
            raise SystemExit("--model cos requires --gallery")
        gallery = load_embeddings(args.gallery, kind="gallery", normalize=args.normalize)
        table = score("cos", probes, gallery)
        name = "COS"
    else:
        model = load_model(args.model)
        table = score(model, probes)
        name = Path(args.model).stem
    try:
        curve = compute_oroc(table, labels)
    except ClosedSetError as exc:
        print(f"closed-set evaluation only: Rank-1 = {exc.rank1:.4f}")
        return 0
    points = args.fpir_points
    print(format_table({name: {f: tpir_at_fpir(curve, f) for f in points}}, points))
    print(f"Rank-1 = {rank1(table, labels):.4f}")
    if args.out_curve:
        export_curve(curve, args.out_curve)
    return 0


def cmd_sweep(args) -> int:
    gallery = load_embeddings(args.gallery, kind="gallery", normalize=args.normalize)
    probes = load_embeddings(args.probes, kind="probes", normalize=args.normalize)
    values = args.values or SWEEP_GRIDS[args.param]
    config = _train_config(args, 100)
    n_subj = len(gallery.subjects)
    rows = {}
    for v in values:
        size = default_ensemble_size(n_subj)
        hidden, margin, lam = NAE_HIDDEN, args.margin, args.lam
        if args.param == "hidden":
            hidden = int(v)
        elif args.param == "ensemble-size":
            size = max(1, int(round(v * n_subj)))
        elif args.param == "margin":
            margin = v
        else:
            lam = v
        negatives = None
        if args.loss != "cel":
            negatives = aug.generate(gallery, aug.AugmentConfig(args.augment, lam, seed=args.seed))
        model = train_ensemble(gallery, negatives, args.loss, margin, config, size, hidden,
                               n_jobs=args.jobs)
        curve = compute_oroc(score(model, probes))
        rows[f"{args.param}={v:g}"] = {f: tpir_at_fpir(curve, f) for f in args.fpir_points}
        log.info("finished %s=%g", args.param, v)
    print(format_table(rows, args.fpir_points))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opennae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic gallery and probe set")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--known", type=int, default=20)
    p.add_argument("--unknown", type=int, default=20)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--spread", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-gallery", required=True)
    p.add_argument("--out-probes", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="synthesize negative embeddings from a gallery")
    p.add_argument("--method", choices=aug.METHODS, default="omu")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gallery", required=True)
    p.add_argument("--out", required=True)
    _add_normalize(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train an ensemble (nae) or multi-class adapter (nan)")
    p.add_argument("--model", choices=("nae", "nan"), default="nae")
    p.add_argument("--loss", choices=("cel", "eos", "mel"), default="mel")
    p.add_argument("--margin", type=float, default=0.3)
    p.add_argument("--ensemble-size", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--aggregate", choices=("logit", "softmax"), default="logit")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--gallery", required=True)
    p.add_argument("--negatives", default=None)
    p.add_argument("--out-model", required=True)
    _add_training(p)
    _add_normalize(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score probes and report TPIR at FPIR operating points")
    p.add_argument("--model", required=True, help="model file, or 'cos' for cosine scoring")
    p.add_argument("--gallery", default=None, help="gallery CSV (for --model cos)")
    p.add_argument("--probes", required=True)
    p.add_argument("--labels", default=None, help="optional CSV of sample,subject overrides")
    p.add_argument("--out-curve", default=None)
    p.add_argument("--fpir-points", type=_float_list, default=[1.0, 0.1, 0.01, 0.001])
    _add_normalize(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="ensemble parameter sweep on a gallery/probe pair")
    p.add_argument("--param", choices=sorted(SWEEP_GRIDS), default="hidden")
    p.add_argument("--values", type=_float_list, default=None,
                   help="grid values; ensemble-size values are fractions of |G|")
    p.add_argument("--loss", choices=("cel", "eos", "mel"), default="mel")
    p.add_argument("--augment", choices=("omu", "mmu", "sfa"), default="omu")
    p.add_argument("--margin", type=float, default=0.3)
    p.add_argument("--lambda", dest="lam", type=float, default=aug.DEFAULT_LAMBDA)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--gallery", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--fpir-points", type=_float_list, default=[1.0, 0.1, 0.01])
    _add_training(p)
    _add_normalize(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", BACKEND)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
