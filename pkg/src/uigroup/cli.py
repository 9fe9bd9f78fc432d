"""Command-line front door: ``uigroup <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import colormap as cm
from . import evaluation, grouping, hierarchy, refinement
from .geometry import BBox, Detections, denormalize, load_detections, normalize, center_form
from .jsonio import dumps, read_json, write_json
from .pipeline import (
    ConfigError,
    ConstantDescriber,
    GROUP_COLOR,
    OverlayStyle,
    PipelineConfig,
    build_accessibility_records,
    groups_to_dict,
    load_groups,
    load_image,
    records_to_dict,
    render_overlay,
    run_pipeline,
    save_png,
)

log = logging.getLogger("uigroup")


def _config(args) -> PipelineConfig:
    return PipelineConfig.load(getattr(args, "config", None))


def cmd_colormap(args):
    image = load_image(args.image)
    extent = cm.Extent(image.shape[1], image.shape[0])
    ocr = cm.load_text_boxes(args.ocr, extent) if args.ocr else []
    nontext = cm.detect_nontext(image, args.min_area, args.offset)
    source = "external-file" if args.ocr else "builtin"
    elements = cm.ElementBoxes(tuple(nontext), tuple(t.box for t in ocr), source)
    cm.export_colormap_png(cm.render_colormap(elements, extent), args.out)
    log.info("colormap: %d non-text, %d text boxes -> %s", len(nontext), len(ocr), args.out)


def cmd_prior_fit(args):
    paths = sorted(Path(args.annotations).glob("*.json"))
    if not paths:
        raise FileNotFoundError(f"no annotation files in {args.annotations}")
    corpus = refinement.load_corpus(paths)
    model = refinement.fit_prior(corpus, args.bands, args.sigma, args.mu, args.hidden, args.seed)
    model.save(args.out)
    if args.figure:
        from .plots import plot_band_weights

        plot_band_weights(model, args.figure)
    log.info("prior: %d bands from %d files, members per band %s", model.n_bands, len(paths), model.counts)


def _layer_deltas(data, n_boxes):
    """Accept {"layers": [[Δ per box] per layer]} or {"deltas": [Δ per box]}."""
    if "layers" in data:
        layers = data["layers"]
    elif "deltas" in data:
        layers = [data["deltas"]]
    else:
        raise ValueError("deltas file needs a 'layers' or 'deltas' key")
    for d, layer in enumerate(layers):
        if len(layer) != n_boxes:
            raise ValueError(f"layer {d} has {len(layer)} deltas for {n_boxes} boxes")
    return layers


def cmd_refine(args):
    det = load_detections(args.boxes)
    model = refinement.PriorModel.load(args.prior) if args.prior else None
    layers = _layer_deltas(read_json(args.deltas), len(det.boxes))
    refined = []
    for i, box in enumerate(det.boxes):
        cf = center_form(normalize(box, det.screen))
        history = refinement.refine_iteratively(cf, [layer[i] for layer in layers], model)
        final = history[-1] if history else cf
        refined.append(denormalize(BBox.from_center(*final), det.screen))
    write_json(args.out, Detections(det.image, det.screen, refined, det.scores).to_dict())


def cmd_group(args):
    det = load_detections(args.boxes)
    cfg = grouping.GroupingConfig(args.eps, args.min_pts, args.connectivity, args.align_tol, args.align_mode)
    groups = grouping.perceptual_groups(det.normalized(), cfg)
    write_json(args.out, groups_to_dict(groups, det.screen))
    log.info("group: %d boxes -> %d perceptual groups", len(det.boxes), len(groups))


def cmd_retrieve(args):
    det = load_detections(args.boxes)
    tree = hierarchy.ViewNode.from_dict(read_json(args.hierarchy))
    layer_groups = hierarchy.retrieve_layers(det.boxes, tree, args.ti, args.td)
    for g in layer_groups:
        if not g.layer_ids:
            log.warning("box %d retrieved no layers", g.box_index)
    annotated = hierarchy.annotate_groups(tree, layer_groups)
    write_json(args.out, annotated.to_dict())


def cmd_dom(args):
    tree = hierarchy.ViewNode.from_dict(read_json(args.hierarchy))
    text = hierarchy.serialize_dom(hierarchy.emit_dom(tree))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_a11y(args):
    det = load_detections(args.boxes)
    ocr = cm.load_text_boxes(args.ocr, det.screen) if args.ocr else []
    describer = ConstantDescriber(args.description) if args.description else None
    write_json(args.out, records_to_dict(build_accessibility_records(det.boxes, ocr, describer)))


def _eval_inputs(path):
    """Boxes (+ scores) from a detection file or a groups file."""
    data = read_json(path)
    if "groups" in data:
        boxes, _ = load_groups(path)
        return boxes, None
    det = Detections.from_dict(data)
    return det.boxes, det.scores


def cmd_eval(args):
    pred, gt = Path(args.pred), Path(args.gt)
    if pred.is_dir():
        pairs = [(p, gt / p.name) for p in sorted(pred.glob("*.json"))]
        missing = [str(g) for _, g in pairs if not g.exists()]
        if missing:
            raise FileNotFoundError(f"ground truth missing for: {', '.join(missing)}")
    else:
        pairs = [(pred, gt)]
    screens = []
    for p, g in pairs:
        boxes, scores = _eval_inputs(p)
        gts, _ = _eval_inputs(g)
        screens.append((boxes, gts, scores))
    report = evaluation.prf_sweep_many(screens, per_image=args.per_image)
    if args.out:
        write_json(args.out, report.to_dict())
    else:
        sys.stdout.write(dumps(report.to_dict()))
    if args.figure:
        from .plots import plot_prf_sweep

        plot_prf_sweep(report, args.figure)
    log.info("eval: P=%.3f R=%.3f F1=%.3f", report.precision, report.recall, report.f1)


def cmd_availability(args):
    score = evaluation.code_availability(args.changed, args.total)
    sys.stdout.write(dumps({"raw": score.raw, "banded": score.banded}))


def cmd_overlay(args):
    image = load_image(args.image)
    det = load_detections(args.boxes)
    canvas = render_overlay(image, det.boxes, OverlayStyle(tuple(args.color), args.thickness))
    if args.groups:
        boxes, screen = load_groups(args.groups)
        screen = screen or det.screen
        canvas = render_overlay(canvas, [denormalize(b, screen) for b in boxes], OverlayStyle(GROUP_COLOR, args.thickness))
    save_png(canvas, args.out)


def cmd_run(args):
    cfg = _config(args)
    if args.workers is not None:
        cfg.run.workers = args.workers
    if args.figures:
        cfg.run.figures = True
    if args.eps is not None:
        cfg.grouping.eps = args.eps
    cfg.validate()
    manifest = run_pipeline(cfg, args.input, args.out)
    log.info("run: %d screens, %d failed", manifest["n_screens"], manifest["n_failed"])
    return 1 if manifest["n_failed"] and args.strict else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uigroup", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--config", help="config JSON (default: $UIGROUP_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        return p

    p = add("colormap", cmd_colormap, "render the red/blue element colormap of a screenshot")
    p.add_argument("--image", required=True)
    p.add_argument("--ocr")
    p.add_argument("--out", required=True)
    p.add_argument("--min-area", type=int, default=cm.MIN_AREA)
    p.add_argument("--offset", type=int, default=cm.BINARIZE_OFFSET)

    p = add("prior-fit", cmd_prior_fit, "fit per-band correlation matrices from annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--bands", type=int, default=refinement.DEFAULT_BANDS)
    p.add_argument("--sigma", type=float, default=refinement.DEFAULT_SIGMA)
    p.add_argument("--mu", type=float, default=refinement.DEFAULT_MU)
    p.add_argument("--hidden", type=int, default=refinement.DEFAULT_HIDDEN)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--figure", help="also plot band weights and correlations to this PNG")

    p = add("refine", cmd_refine, "apply per-layer box deltas (plus the band prior) to detections")
    p.add_argument("--boxes", required=True)
    p.add_argument("--prior")
    p.add_argument("--deltas", required=True)
    p.add_argument("--out", required=True)

    p = add("group", cmd_group, "infer perceptual groups from detected boxes")
    p.add_argument("--boxes", required=True)
    p.add_argument("--eps", type=float, default=grouping.DEFAULT_EPS)
    p.add_argument("--min-pts", type=int, default=grouping.DEFAULT_MIN_PTS)
    p.add_argument("--connectivity", type=float, default=grouping.DEFAULT_CONNECTIVITY)
    p.add_argument("--align-tol", type=float, default=grouping.DEFAULT_ALIGN_TOL)
    p.add_argument("--align-mode", choices=("edge", "center"), default="edge")
    p.add_argument("--out", required=True)

    p = add("retrieve", cmd_retrieve, "retrieve prototype layers per box and annotate #group# nodes")
    p.add_argument("--boxes", required=True)
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--ti", type=float, default=hierarchy.DEFAULT_TI)
    p.add_argument("--td", type=int, default=hierarchy.DEFAULT_TD)
    p.add_argument("--out", required=True)

    p = add("dom", cmd_dom, "emit the DOM tree of a (possibly annotated) hierarchy")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--out")

    p = add("a11y", cmd_a11y, "build accessibility records for detected boxes")
    p.add_argument("--boxes", required=True)
    p.add_argument("--ocr")
    p.add_argument("--description", help="constant description attached to every record")
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "precision/recall/F1 over IoU 0.50:0.95")
    p.add_argument("--pred", required=True, help="file or directory")
    p.add_argument("--gt", required=True, help="file or directory")
    p.add_argument("--per-image", action="store_true", help="average per screen instead of pooling")
    p.add_argument("--out")
    p.add_argument("--figure", help="plot the sweep to this PNG")

    p = add("availability", cmd_availability, "code availability score and its 1-5 band")
    p.add_argument("--changed", type=int, required=True)
    p.add_argument("--total", type=int, required=True)

    p = add("overlay", cmd_overlay, "draw detection (and group) boxes over a screenshot")
    p.add_argument("--image", required=True)
    p.add_argument("--boxes", required=True)
    p.add_argument("--groups")
    p.add_argument("--color", type=int, nargs=3, default=[0, 0, 255])
    p.add_argument("--thickness", type=int, default=2)
    p.add_argument("--out", required=True)

    p = add("run", cmd_run, "full pipeline over a directory of screenshots")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--figures", action="store_true")
    p.add_argument("--strict", action="store_true", help="exit 1 when any screen failed")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args) or 0
    except ConfigError as exc:
        print(f"uigroup: invalid config: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"uigroup {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
