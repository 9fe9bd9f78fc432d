"""Configuration, accessibility records, overlays and the batch runner."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from PIL import Image

from . import colormap as cm
from . import evaluation, grouping, hierarchy
from .geometry import BBox, Detections, Extent, contains_point, corner_form, denormalize, load_detections
from .jsonio import read_json, write_json

log = logging.getLogger(__name__)

CONFIG_ENV = "UIGROUP_CONFIG"

DETECTION_COLOR = (0, 0, 255)
GROUP_COLOR = (255, 0, 0)


class ConfigError(ValueError):
    pass


# -- configuration ---------------------------------------------------------------


@dataclass
class GroupingSection:
    eps: float = grouping.DEFAULT_EPS
    min_pts: int = grouping.DEFAULT_MIN_PTS
    connectivity: float = grouping.DEFAULT_CONNECTIVITY
    align_tol: float = grouping.DEFAULT_ALIGN_TOL
    align_mode: str = "edge"


@dataclass
class HierarchySection:
    ti: float = hierarchy.DEFAULT_TI
    td: int = hierarchy.DEFAULT_TD


@dataclass
class PriorSection:
    bands: int = 4
    sigma: float = 0.3
    mu: float = 0.0
    s: float = 0.05


@dataclass
class ColormapSection:
    min_area: int = cm.MIN_AREA
    offset: int = cm.BINARIZE_OFFSET


@dataclass
class RunSection:
    input: Optional[str] = None
    output: Optional[str] = None
    workers: Optional[int] = None
    figures: bool = False
    description: Optional[str] = None
    per_image: bool = False


@dataclass
class PipelineConfig:
    grouping: GroupingSection = field(default_factory=GroupingSection)
    hierarchy: HierarchySection = field(default_factory=HierarchySection)
    prior: PriorSection = field(default_factory=PriorSection)
    colormap: ColormapSection = field(default_factory=ColormapSection)
    run: RunSection = field(default_factory=RunSection)

    _sections = {
        "grouping": GroupingSection,
        "hierarchy": HierarchySection,
        "prior": PriorSection,
        "colormap": ColormapSection,
        "run": RunSection,
    }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        cfg = cls()
        cfg.update(data)
        return cfg

    def update(self, data: dict):
        for name, values in (data or {}).items():
            if name not in self._sections:
                raise ConfigError(f"unknown config section {name!r}")
            section = getattr(self, name)
            for key, value in (values or {}).items():
                if not hasattr(section, key):
                    raise ConfigError(f"unknown key {name}.{key}")
                setattr(section, key, value)

    @classmethod
    def load(cls, path=None) -> "PipelineConfig":
        path = path or os.environ.get(CONFIG_ENV)
        if not path:
            return cls()
        try:
            return cls.from_dict(read_json(path))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in self._sections}

    def validate(self) -> "PipelineConfig":
        g, h, p, c, r = self.grouping, self.hierarchy, self.prior, self.colormap, self.run
        checks = [
            (g.eps > 0, f"grouping.eps must be positive, got {g.eps}"),
            (g.min_pts >= 1, f"grouping.min_pts must be >= 1, got {g.min_pts}"),
            (g.connectivity >= 0, f"grouping.connectivity must be >= 0, got {g.connectivity}"),
            (g.align_tol >= 0, f"grouping.align_tol must be >= 0, got {g.align_tol}"),
            (g.align_mode in ("edge", "center"), f"grouping.align_mode must be edge or center"),
            (0 <= h.ti <= 1, f"hierarchy.ti must lie in [0, 1], got {h.ti}"),
            (h.td >= 0, f"hierarchy.td must be >= 0, got {h.td}"),
            (p.bands >= 1, f"prior.bands must be >= 1, got {p.bands}"),
            (p.sigma > 0, f"prior.sigma must be positive, got {p.sigma}"),
            (0 < p.s < 1, f"prior.s must lie in (0, 1), got {p.s}"),
            (c.min_area >= 0, f"colormap.min_area must be >= 0, got {c.min_area}"),
            (0 <= c.offset < 255, f"colormap.offset must lie in [0, 255), got {c.offset}"),
            (r.workers is None or r.workers >= 1, f"run.workers must be >= 1, got {r.workers}"),
        ]
        errors = [msg for ok, msg in checks if not ok]
        if errors:
            raise ConfigError("; ".join(errors))
        return self

    def grouping_config(self) -> grouping.GroupingConfig:
        g = self.grouping
        return grouping.GroupingConfig(g.eps, g.min_pts, g.connectivity, g.align_tol, g.align_mode)


# -- accessibility ---------------------------------------------------------------


@dataclass(frozen=True)
class AccessibilityRecord:
    position: tuple
    size: tuple
    texts: tuple
    description: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "size": list(self.size),
            "texts": list(self.texts),
            "description": self.description,
        }


Describer = Callable[[BBox], Optional[str]]


class ConstantDescriber:
    """Stand-in for a captioning or icon-classification model."""

    def __init__(self, text: str):
        self.text = text

    def __call__(self, box: BBox) -> Optional[str]:
        return self.text


def build_accessibility_records(groups, ocr, describer: Optional[Describer] = None) -> list[AccessibilityRecord]:
    """One record per group box; a text joins a group when its box center is inside it."""
    records = []
    for box in groups:
        texts = tuple(t.text for t in ocr if contains_point(box, *t.box.center))
        records.append(
            AccessibilityRecord(
                position=corner_form(box),
                size=(box.w, box.h),
                texts=texts,
                description=describer(box) if describer is not None else None,
            )
        )
    return records


# -- overlays --------------------------------------------------------------------


@dataclass(frozen=True)
class OverlayStyle:
    color: tuple = DETECTION_COLOR
    thickness: int = 2


def render_overlay(image, boxes, style: OverlayStyle = OverlayStyle()) -> np.ndarray:
    """Copy of ``image`` with each box outlined by an inner ring of ``style.thickness`` px."""
    out = np.array(image, dtype=np.uint8, copy=True)
    if out.ndim == 2:
        out = np.repeat(out[..., None], 3, axis=-1)
    h, w = out.shape[:2]
    color = np.array(style.color[: out.shape[2]], dtype=np.uint8)
    t = style.thickness
    for box in boxes:
        x1, y1 = max(0, math.floor(box.x)), max(0, math.floor(box.y))
        x2, y2 = min(w, math.ceil(box.x2)), min(h, math.ceil(box.y2))
        if x1 >= x2 or y1 >= y2:
            continue
        out[y1 : min(y1 + t, y2), x1:x2] = color
        out[max(y2 - t, y1) : y2, x1:x2] = color
        out[y1:y2, x1 : min(x1 + t, x2)] = color
        out[y1:y2, max(x2 - t, x1) : x2] = color
    return out


def save_png(array, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path, format="PNG")
    return path


def load_image(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


# -- file helpers shared with the CLI ---------------------------------------------


def load_groups(path) -> tuple[list[BBox], Optional[Extent]]:
    """Read a groups file; returns normalized boxes and the screen when recorded."""
    data = read_json(path)
    screen = None
    if "screen" in data:
        screen = Extent(data["screen"]["width"], data["screen"]["height"])
    return [BBox.from_corners(*g["corners"]) for g in data["groups"]], screen


def groups_to_dict(groups, screen: Optional[Extent] = None) -> dict:
    out = {"groups": [g.to_dict() for g in groups]}
    if screen is not None:
        out["screen"] = {"width": screen.width, "height": screen.height}
    return out


def records_to_dict(records) -> dict:
    return {"records": [r.to_dict() for r in records]}


# -- batch runner ----------------------------------------------------------------


@dataclass
class ScreenResult:
    name: str
    artifacts: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": "failed" if self.errors else "ok",
            "artifacts": self.artifacts,
            "errors": self.errors,
        }


def discover_screens(input_dir) -> list[Path]:
    return sorted(p for p in Path(input_dir).glob("*.png") if not p.name.endswith(".cmap.png"))


def _sidecar(image: Path, suffix: str) -> Optional[Path]:
    path = image.with_name(image.stem + suffix)
    return path if path.exists() else None


class _Stage:
    """Tracks the current stage so failures can be attributed."""

    def __init__(self, result: ScreenResult, out_dir: Path, root: Path):
        self.result, self.out_dir, self.root = result, out_dir, root
        self.name = "setup"

    def wrote(self, path: Path):
        self.result.artifacts.append({"stage": self.name, "path": path.relative_to(self.root).as_posix()})


def process_screen(image_path: Path, cfg: PipelineConfig, root: Path) -> ScreenResult:
    name = image_path.stem
    result = ScreenResult(name)
    out_dir = root / name
    st = _Stage(result, out_dir, root)
    try:
        st.name = "load"
        image = load_image(image_path)
        extent = Extent(image.shape[1], image.shape[0])
        ocr_path = _sidecar(image_path, ".ocr.json")
        ocr = cm.load_text_boxes(ocr_path, extent) if ocr_path else []

        st.name = "colormap"
        nontext = cm.detect_nontext(image, cfg.colormap.min_area, cfg.colormap.offset)
        elements = cm.ElementBoxes(tuple(nontext), tuple(t.box for t in ocr))
        st.wrote(cm.export_colormap_png(cm.render_colormap(elements, extent), out_dir / "colormap.png"))

        st.name = "detections"
        det_path = _sidecar(image_path, ".det.json")
        if det_path is None:
            raise FileNotFoundError(f"no detections file {image_path.stem}.det.json")
        det = load_detections(det_path)
        if (det.screen.width, det.screen.height) != (extent.width, extent.height):
            raise ValueError(
                f"detections screen {det.screen.width}x{det.screen.height} "
                f"differs from image {extent.width}x{extent.height}"
            )
        st.wrote(write_json(out_dir / "detections.json", det.to_dict()))

        st.name = "group"
        groups = grouping.perceptual_groups(det.normalized(), cfg.grouping_config())
        st.wrote(write_json(out_dir / "groups.json", groups_to_dict(groups, det.screen)))

        st.name = "a11y"
        describer = ConstantDescriber(cfg.run.description) if cfg.run.description else None
        records = build_accessibility_records(det.boxes, ocr, describer)
        st.wrote(write_json(out_dir / "a11y.json", records_to_dict(records)))

        st.name = "overlay"
        group_boxes = [denormalize(g.box, det.screen) for g in groups]
        canvas = render_overlay(image, det.boxes, OverlayStyle(DETECTION_COLOR))
        canvas = render_overlay(canvas, group_boxes, OverlayStyle(GROUP_COLOR))
        st.wrote(save_png(canvas, out_dir / "overlay.png"))

        hier_path = _sidecar(image_path, ".hierarchy.json")
        if hier_path is not None:
            st.name = "retrieve"
            tree = hierarchy.ViewNode.from_dict(read_json(hier_path))
            layer_groups = hierarchy.retrieve_layers(det.boxes, tree, cfg.hierarchy.ti, cfg.hierarchy.td)
            annotated = hierarchy.annotate_groups(tree, layer_groups)
            st.wrote(write_json(out_dir / "annotated.json", annotated.to_dict()))
            st.name = "dom"
            dom_path = out_dir / "page.dom"
            dom_path.write_text(hierarchy.serialize_dom(hierarchy.emit_dom(annotated)), encoding="utf-8")
            st.wrote(dom_path)

        gt_path = _sidecar(image_path, ".gt.json")
        pg_path = _sidecar(image_path, ".pg.json")
        if gt_path is not None or pg_path is not None:
            st.name = "eval"
            report = {}
            sweeps = {}
            if gt_path is not None:
                gt = load_detections(gt_path)
                sweeps["components"] = evaluation.prf_sweep(det.boxes, gt.boxes, det.scores)
            if pg_path is not None:
                gt_groups, _ = load_groups(pg_path)
                sweeps["perceptual_groups"] = evaluation.prf_sweep([g.box for g in groups], gt_groups)
            report = {k: v.to_dict() for k, v in sweeps.items()}
            st.wrote(write_json(out_dir / "eval.json", report))
            if cfg.run.figures:
                from .plots import plot_prf_sweep

                st.name = "figure"
                for key, sweep in sweeps.items():
                    st.wrote(plot_prf_sweep(sweep, out_dir / f"eval_{key}.png", title=f"{name}: {key}"))
    except Exception as exc:  # batch isolation: record and move on
        log.warning("%s: stage %s failed: %s", name, st.name, exc)
        result.errors.append({"stage": st.name, "message": f"{type(exc).__name__}: {exc}"})
    return result


def run_pipeline(cfg: PipelineConfig, input_dir=None, output_dir=None) -> dict:
    """Process every screenshot under the input directory and write a manifest."""
    cfg.validate()
    input_dir = Path(input_dir or cfg.run.input or ".")
    output_dir = Path(output_dir or cfg.run.output or "uigroup-out")
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory {input_dir} does not exist")
    output_dir.mkdir(parents=True, exist_ok=True)
    screens = discover_screens(input_dir)
    workers = cfg.run.workers or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda p: process_screen(p, cfg, output_dir), screens))
    manifest = {
        "config": cfg.to_dict() | {"run": {k: v for k, v in asdict(cfg.run).items() if k not in ("input", "output")}},
        "screens": [r.to_dict() for r in results],
        "n_screens": len(results),
        "n_failed": sum(bool(r.errors) for r in results),
    }
    write_json(output_dir / "manifest.json", manifest)
    return manifest
