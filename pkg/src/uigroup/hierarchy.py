"""Design-prototype view hierarchies: layer retrieval, group annotation, DOM output."""

from __future__ import annotations

import copy
import html
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .geometry import BBox, cover, intersection_area

GROUP_PREFIX = "#group#"
DEFAULT_TI = 0.5
DEFAULT_TD = 2


class GroupConflictError(ValueError):
    pass


@dataclass
class ViewNode:
    id: str
    name: str
    bbox: BBox
    children: list = field(default_factory=list)
    kind: Optional[str] = None  # "text" or "image" for leaves, as exported

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_group(self) -> bool:
        return self.name.startswith(GROUP_PREFIX)

    def walk(self):
        """Pre-order traversal yielding (node, parent, depth)."""
        stack = [(self, None, 0)]
        while stack:
            node, parent, depth = stack.pop()
            yield node, parent, depth
            for child in reversed(node.children):
                stack.append((child, node, depth + 1))

    def leaf_ids(self) -> list[str]:
        return [n.id for n, _, _ in self.walk() if n.is_leaf]

    def to_dict(self) -> dict:
        out = {"id": self.id, "name": self.name, "bbox": self.bbox.to_list()}
        if self.kind is not None:
            out["type"] = self.kind
        out["children"] = [c.to_dict() for c in self.children]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ViewNode":
        return cls(
            id=str(data["id"]),
            name=str(data.get("name", "")),
            bbox=BBox.from_list(data["bbox"]),
            children=[cls.from_dict(c) for c in data.get("children", [])],
            kind=data.get("type"),
        )


@dataclass(frozen=True)
class LayerGroup:
    box_index: int
    layer_ids: tuple


@dataclass
class DomNode:
    tag: str  # container | text | image
    name: str
    children: list = field(default_factory=list)


def leaves(tree: ViewNode) -> list[tuple[ViewNode, int]]:
    return [(node, depth) for node, _, depth in tree.walk() if node.is_leaf]


def majority_depth(depths) -> int:
    counts = Counter(depths)
    best = max(counts.values())
    return min(d for d, c in counts.items() if c == best)


def retrieve_layers(boxes, tree: ViewNode, ti: float = DEFAULT_TI, td: int = DEFAULT_TD) -> list[LayerGroup]:
    """Map each predicted box onto the leaf layers it covers.

    A leaf qualifies when the share of its own area inside the box exceeds
    ``ti``. Leaves whose depth strays more than ``td`` from the majority
    depth are dropped, and a leaf claimed by an earlier box is not offered
    to later ones.
    """
    flat = leaves(tree)
    claimed = set()
    result = []
    for i, box in enumerate(boxes):
        temp = [
            (leaf, depth)
            for leaf, depth in flat
            if leaf.id not in claimed and intersection_area(leaf.bbox, box) / leaf.bbox.area > ti
        ]
        if temp:
            tm = majority_depth(d for _, d in temp)
            temp = [(leaf, d) for leaf, d in temp if abs(d - tm) <= td]
        ids = tuple(leaf.id for leaf, _ in temp)
        claimed.update(ids)
        result.append(LayerGroup(i, ids))
    return result


def _index(tree: ViewNode):
    parents, leaf_sets, order = {}, {}, {}
    for pos, (node, parent, _) in enumerate(tree.walk()):
        parents[id(node)] = parent
        order[id(node)] = pos

    def collect(node):
        if node.is_leaf:
            s = frozenset([node.id])
        else:
            s = frozenset().union(*(collect(c) for c in node.children))
        leaf_sets[id(node)] = s
        return s

    collect(tree)
    return parents, leaf_sets, order


def _ancestors(node, parents):
    chain = []
    while node is not None:
        chain.append(node)
        node = parents[id(node)]
    return chain


def _check_conflicts(groups):
    owner = {}
    for k, group in enumerate(groups):
        for layer in group.layer_ids:
            if layer in owner and owner[layer] != k:
                a, b = groups[owner[layer]].box_index, group.box_index
                raise GroupConflictError(f"layer {layer!r} claimed by both group {a} and group {b}")
            owner[layer] = k


def annotate_groups(tree: ViewNode, groups) -> ViewNode:
    """Return a copy of ``tree`` where each group is held by one ``#group#`` node.

    A container whose leaves are exactly the group's layers is renamed;
    otherwise a new container is inserted under the lowest common ancestor
    and the group's layers (as maximal fully-covered subtrees) move into it.
    """
    groups = [g for g in groups if g.layer_ids]
    _check_conflicts(groups)
    tree = copy.deepcopy(tree)
    known = {n.id for n, _, _ in tree.walk()}
    for group in groups:
        target = frozenset(group.layer_ids)
        parents, leaf_sets, order = _index(tree)
        nodes = {n.id: n for n, _, _ in tree.walk()}
        missing = target - {n.id for n in nodes.values() if n.is_leaf}
        if missing:
            raise KeyError(f"group {group.box_index}: unknown leaf ids {sorted(missing)}")

        exact = [
            n for n, _, _ in tree.walk() if not n.is_leaf and leaf_sets[id(n)] == target
        ]
        if exact:
            node = exact[-1]  # deepest container in a single-child chain
            if not node.is_group:
                node.name = GROUP_PREFIX + node.name
            continue
        if len(target) == 1 and tree.is_leaf:
            tree.name = GROUP_PREFIX + tree.name
            continue

        members = [nodes[i] for i in target]
        chains = [_ancestors(m, parents)[1:] for m in members]
        shared = set(map(id, chains[0])).intersection(*(map(id, c) for c in chains[1:]))
        lca = next(a for a in chains[0] if id(a) in shared)

        moved = []

        def pull(node):
            # detach maximal subtrees of ``node`` whose leaves all belong to the group
            keep = []
            for child in node.children:
                if leaf_sets[id(child)] <= target:
                    moved.append(child)
                elif leaf_sets[id(child)] & target:
                    pull(child)
                    keep.append(child)
                else:
                    keep.append(child)
            node.children[:] = keep

        first_pos = next(
            i for i, c in enumerate(lca.children) if leaf_sets[id(c)] & target
        )
        pull(lca)
        moved.sort(key=lambda n: order[id(n)])
        new_id = f"group-{group.box_index}"
        while new_id in known:
            new_id += "_"
        known.add(new_id)
        wrapper = ViewNode(
            id=new_id,
            name=f"{GROUP_PREFIX}g{group.box_index}",
            bbox=cover(n.bbox for n in moved),
            children=moved,
        )
        lca.children.insert(min(first_pos, len(lca.children)), wrapper)
    return tree


def emit_dom(tree: ViewNode) -> DomNode:
    """Collapse plain containers; keep the root and every ``#group#`` node as containers."""

    def leaf_node(node):
        tag = "text" if node.kind == "text" else "image"
        return DomNode(tag, node.name)

    def flatten(node):
        out = []
        for child in node.children:
            if child.is_leaf:
                out.append(leaf_node(child) if not child.is_group else DomNode("container", child.name, [leaf_node(child)]))
            elif child.is_group:
                out.append(DomNode("container", child.name, flatten(child)))
            else:
                out.extend(flatten(child))
        return out

    if tree.is_leaf:
        return DomNode("container", tree.name, [leaf_node(tree)])
    return DomNode("container", tree.name, flatten(tree))


def serialize_dom(dom: DomNode) -> str:
    lines = []

    def emit(node, depth):
        pad = "  " * depth
        name = html.escape(node.name, quote=True)
        if node.tag == "container":
            lines.append(f'{pad}<container name="{name}">')
            for child in node.children:
                emit(child, depth + 1)
            lines.append(f"{pad}</container>")
        else:
            lines.append(f'{pad}<{node.tag} name="{name}"/>')

    emit(dom, 0)
    return "\n".join(lines) + "\n"
