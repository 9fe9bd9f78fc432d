"""Small synthetic screenshot corpus for pipeline and CLI tests."""

import json
from pathlib import Path

import numpy as np
from PIL import Image

WIDTH, HEIGHT = 200, 400


def _card_boxes():
    # a vertical list of four cards, then a tab bar of four icons
    cards = [(10, 20 + 60 * i, 180, 50) for i in range(4)]
    tabs = [(10 + 48 * i, 350, 36, 36) for i in range(4)]
    return cards + tabs


def write_screen(root: Path, name: str, *, gt=True, hierarchy=False, ocr=True, seed=0):
    rng = np.random.default_rng(seed)
    img = np.full((HEIGHT, WIDTH, 3), 255, dtype=np.uint8)
    boxes = _card_boxes()
    texts = []
    leaves = []
    for k, (x, y, w, h) in enumerate(boxes):
        shade = int(rng.integers(20, 120))
        if h == 50:
            img[y + 5 : y + 45, x + 5 : x + 45] = shade  # avatar
            img[y + 15 : y + 27, x + 60 : x + 140] = 40  # caption
            texts.append({"box": [x + 60, y + 15, 80, 12], "text": f"item {k}"})
            leaves.append([
                {"id": f"icon{k}", "name": f"icon{k}", "bbox": [x + 5, y + 5, 40, 40], "type": "image", "children": []},
                {"id": f"label{k}", "name": f"label{k}", "bbox": [x + 60, y + 15, 80, 12], "type": "text", "children": []},
            ])
        else:
            img[y + 4 : y + 24, x + 8 : x + 28] = shade
            img[y + 27 : y + 33, x + 6 : x + 30] = 40
            texts.append({"box": [x + 6, y + 27, 24, 6], "text": f"tab {k}"})
            leaves.append([
                {"id": f"icon{k}", "name": f"icon{k}", "bbox": [x + 8, y + 4, 20, 20], "type": "image", "children": []},
                {"id": f"label{k}", "name": f"label{k}", "bbox": [x + 6, y + 27, 24, 6], "type": "text", "children": []},
            ])
    Image.fromarray(img).save(root / f"{name}.png")

    det = {
        "image": f"{name}.png",
        "screen": {"width": WIDTH, "height": HEIGHT},
        "boxes": [{"x": x, "y": y, "w": w, "h": h, "score": round(0.5 + 0.05 * i, 2)} for i, (x, y, w, h) in enumerate(boxes)],
    }
    (root / f"{name}.det.json").write_text(json.dumps(det))
    if ocr:
        (root / f"{name}.ocr.json").write_text(json.dumps({"texts": texts}))
    if gt:
        gts = [{"x": x + 1, "y": y, "w": w, "h": h} for x, y, w, h in boxes[:-1]]
        (root / f"{name}.gt.json").write_text(json.dumps({"image": f"{name}.png", "screen": det["screen"], "boxes": gts}))
    if hierarchy:
        # the prototype lists all layers flat under one container
        flat = [leaf for pair in leaves for leaf in pair]
        tree = {"id": "root", "name": "page", "bbox": [0, 0, WIDTH, HEIGHT], "children": [
            {"id": "content", "name": "content", "bbox": [5, 5, 190, 390], "children": flat}
        ]}
        (root / f"{name}.hierarchy.json").write_text(json.dumps(tree))
    return boxes


def write_corpus(root: Path):
    root.mkdir(parents=True, exist_ok=True)
    write_screen(root, "home", gt=True, hierarchy=True, seed=1)
    write_screen(root, "list", gt=True, seed=2)
    write_screen(root, "plain", gt=False, ocr=False, seed=3)
    return root


if __name__ == "__main__":
    import sys

    write_corpus(Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "fixtures" / "corpus"))
