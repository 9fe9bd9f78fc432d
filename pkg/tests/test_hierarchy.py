import json
from collections import Counter

import pytest

from uigroup.geometry import BBox
from uigroup.hierarchy import (
    GroupConflictError,
    LayerGroup,
    ViewNode,
    annotate_groups,
    emit_dom,
    leaves,
    majority_depth,
    retrieve_layers,
    serialize_dom,
)


def leaf(id_, x, y, w, h, kind=None):
    return ViewNode(id_, id_, BBox(x, y, w, h), kind=kind)


def node(id_, *children):
    box = BBox.from_corners(
        min(c.bbox.x for c in children),
        min(c.bbox.y for c in children),
        max(c.bbox.x2 for c in children),
        max(c.bbox.y2 for c in children),
    )
    return ViewNode(id_, id_, box, list(children))


def profiles_tree():
    """A list of five user profiles, each an avatar (oval + photo) plus a caption."""
    users = []
    for i in range(5):
        y = 100 * i
        avatar = node(f"avatar{i}", leaf(f"oval{i}", 10, y, 60, 60), leaf(f"photo{i}", 15, y + 5, 50, 50))
        caption = leaf(f"name{i}", 80, y + 20, 100, 20, kind="text")
        extra = [leaf(f"live{i}", 40, y + 60, 30, 12, kind="text")] if i == 1 else []
        users.append(node(f"user{i}", avatar, caption, *extra))
    return node("list", *users)


class TestLeaves:
    def test_single_node(self):
        t = leaf("a", 0, 0, 1, 1)
        assert leaves(t) == [(t, 0)]

    def test_flat(self):
        t = node("root", leaf("a", 0, 0, 1, 1), leaf("b", 1, 0, 1, 1), leaf("c", 2, 0, 1, 1))
        assert [(n.id, d) for n, d in leaves(t)] == [("a", 1), ("b", 1), ("c", 1)]

    def test_chain(self):
        t = node("r", node("a", node("b", leaf("c", 0, 0, 1, 1))))
        assert [(n.id, d) for n, d in leaves(t)] == [("c", 3)]

    def test_document_order(self):
        t = profiles_tree()
        ids = [n.id for n, _ in leaves(t)]
        assert ids[:4] == ["oval0", "photo0", "name0", "oval1"]


class TestRetrieve:
    def test_exact_cover(self):
        t = node("r", leaf("a", 0, 0, 10, 10), leaf("b", 20, 0, 10, 10))
        (g,) = retrieve_layers([BBox(0, 0, 10, 10)], t, 0.5, 2)
        assert g.layer_ids == ("a",)

    def test_two_siblings(self):
        t = node("r", node("p", leaf("a", 0, 0, 10, 10), leaf("b", 12, 0, 10, 10)), leaf("c", 50, 0, 5, 5))
        (g,) = retrieve_layers([BBox(0, 0, 22, 10)], t)
        assert g.layer_ids == ("a", "b")

    def test_depth_outlier_dropped(self):
        deep = node("d1", node("d2", node("d3", node("d4", node("d5", node("d6", leaf("z", 30, 0, 5, 5)))))))
        t = node(
            "r",
            node("p", node("q", leaf("x", 0, 0, 10, 10), leaf("y", 12, 0, 10, 10))),
            deep,
        )
        depths = {n.id: d for n, d in leaves(t)}
        assert (depths["x"], depths["y"], depths["z"]) == (3, 3, 7)
        (g,) = retrieve_layers([BBox(0, 0, 40, 10)], t, 0.5, 2)
        assert g.layer_ids == ("x", "y")

    def test_threshold_is_strict_and_leaf_relative(self):
        t = node("r", leaf("a", 0, 0, 10, 10))
        (g,) = retrieve_layers([BBox(0, 0, 5, 10)], t, 0.5)
        assert g.layer_ids == ()
        (g,) = retrieve_layers([BBox(0, 0, 6, 10)], t, 0.5)
        assert g.layer_ids == ("a",)

    def test_claimed_leaves_skipped(self):
        t = node("r", leaf("a", 0, 0, 10, 10), leaf("b", 20, 0, 10, 10))
        g1, g2 = retrieve_layers([BBox(0, 0, 30, 10), BBox(0, 0, 10, 10)], t)
        assert g1.layer_ids == ("a", "b")
        assert g2.layer_ids == ()

    def test_majority_tie_prefers_shallow(self):
        assert majority_depth([4, 2, 4, 2, 9]) == 2


class TestAnnotate:
    def test_exact_container_renamed(self):
        t = profiles_tree()
        out = annotate_groups(t, [LayerGroup(0, ("oval0", "photo0"))])
        avatar = out.children[0].children[0]
        assert avatar.name == "#group#avatar0"
        assert t.children[0].children[0].name == "avatar0"  # input untouched

    def test_partial_container_gets_new_node(self):
        t = node("r", node("box", leaf("a", 0, 0, 5, 5), leaf("b", 6, 0, 5, 5), leaf("c", 12, 0, 5, 5)))
        out = annotate_groups(t, [LayerGroup(3, ("a", "b"))])
        box = out.children[0]
        assert [c.id for c in box.children] == ["group-3", "c"]
        new = box.children[0]
        assert new.name == "#group#g3"
        assert [c.id for c in new.children] == ["a", "b"]
        assert new.bbox == BBox(0, 0, 11, 5)

    def test_empty_groups_unchanged(self):
        t = profiles_tree()
        out = annotate_groups(t, [])
        assert json.dumps(out.to_dict()) == json.dumps(t.to_dict())

    def test_cross_container_group_moves_whole_subtrees(self):
        t = profiles_tree()
        # avatar of user 0 plus caption of user 0 and all of user 1
        ids = ("oval0", "photo0", "name0", "oval1", "photo1", "name1", "live1")
        out = annotate_groups(t, [LayerGroup(0, ids)])
        new = out.children[0]
        assert new.name == "#group#g0"
        assert [c.id for c in new.children] == ["user0", "user1"]
        assert [c.id for c in out.children[1:]] == ["user2", "user3", "user4"]

    def test_group_spanning_partial_subtrees(self):
        t = profiles_tree()
        out = annotate_groups(t, [LayerGroup(7, ("name0", "name1"))])
        new = out.children[0]
        assert [c.id for c in new.children] == ["name0", "name1"]
        assert [c.id for c in out.children[1].children] == ["avatar0"]
        assert [c.id for c in out.children[2].children] == ["avatar1", "live1"]

    def test_conflict(self):
        t = profiles_tree()
        with pytest.raises(GroupConflictError, match="group 0 and group 1"):
            annotate_groups(t, [LayerGroup(0, ("oval0", "photo0")), LayerGroup(1, ("photo0",))])

    def test_unknown_leaf(self):
        with pytest.raises(KeyError):
            annotate_groups(profiles_tree(), [LayerGroup(0, ("nope",))])

    def test_leaf_multiset_and_group_nodes(self):
        t = profiles_tree()
        groups = [
            LayerGroup(0, ("oval0", "photo0", "name0")),
            LayerGroup(1, ("name1", "live1")),
            LayerGroup(2, ("photo3",)),
        ]
        out = annotate_groups(t, groups)
        assert Counter(n.id for n, _ in leaves(out)) == Counter(n.id for n, _ in leaves(t))
        for g in groups:
            holders = [
                n for n, _, _ in out.walk() if not n.is_leaf and set(n.leaf_ids()) == set(g.layer_ids) and n.is_group
            ]
            assert len(holders) == 1


class TestDom:
    def test_group_container(self):
        t = node("r", node("#group#card", leaf("a", 0, 0, 1, 1), leaf("b", 1, 0, 1, 1, kind="text")))
        dom = emit_dom(t)
        assert len(dom.children) == 1
        assert dom.children[0].tag == "container"
        assert [c.tag for c in dom.children[0].children] == ["image", "text"]

    def test_flat_six(self):
        t = node("r", *[leaf(f"l{i}", i, 0, 1, 1) for i in range(6)])
        dom = emit_dom(t)
        assert dom.tag == "container" and len(dom.children) == 6

    def test_profiles_flattened_without_groups(self):
        dom = emit_dom(profiles_tree())
        assert all(c.tag != "container" for c in dom.children)
        assert len(dom.children) == 16

    def test_profiles_with_groups(self):
        t = profiles_tree()
        boxes = [BBox(10, 100 * i, 170, 72 if i == 1 else 60) for i in range(5)]
        groups = retrieve_layers(boxes, t)
        out = annotate_groups(t, groups)
        assert [n.name for n in out.children] == [f"#group#user{i}" for i in range(5)]
        dom = emit_dom(out)
        assert [c.tag for c in dom.children] == ["container"] * 5
        assert [len(c.children) for c in dom.children] == [3, 4, 3, 3, 3]

    def test_serialization(self):
        t = node("r", node("#group#a&b", leaf("x", 0, 0, 1, 1, kind="text")), leaf("y", 1, 0, 1, 1))
        text = serialize_dom(emit_dom(t))
        assert text == (
            '<container name="r">\n'
            '  <container name="#group#a&amp;b">\n'
            '    <text name="x"/>\n'
            "  </container>\n"
            '  <image name="y"/>\n'
            "</container>\n"
        )
        assert serialize_dom(emit_dom(t)) == text


def test_json_round_trip():
    t = profiles_tree()
    data = json.loads(json.dumps(t.to_dict()))
    assert ViewNode.from_dict(data) == t
