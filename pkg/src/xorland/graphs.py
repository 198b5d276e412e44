"""Superbasin analysis and disconnectivity-graph rendering.

Thresholds ascend in regular steps from just above the global minimum;
minima whose connecting transition states fall below a threshold merge
into one superbasin there. The tree (a forest, if the network is not
fully connected) renders with loss on the vertical axis and each branch
terminating at its minimum's loss value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .database import KIND_MINIMUM, LandscapeDB


@dataclass
class TreeNode:
    level: float
    members: frozenset
    children: tuple = ()
    min_id: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.min_id is not None

    def canonical(self) -> list:
        """Order-independent (level, member-set) list over all nodes."""
        out = [(self.level, tuple(sorted(self.members)))]
        for c in self.children:
            out.extend(c.canonical())
        return sorted(out)


@dataclass
class DisconnectivityTree:
    thresholds: np.ndarray = field(repr=False)
    roots: tuple[TreeNode, ...] = ()

    @property
    def leaves(self) -> list[TreeNode]:
        out = []

        def walk(n):
            if n.is_leaf:
                out.append(n)
            for c in n.children:
                walk(c)

        for r in self.roots:
            walk(r)
        return out

    @property
    def merge_count(self) -> int:
        count = 0

        def walk(n):
            nonlocal count
            if not n.is_leaf:
                count += 1
            for c in n.children:
                walk(c)

        for r in self.roots:
            walk(r)
        return count

    def canonical(self) -> list:
        return sorted(sum((r.canonical() for r in self.roots), []))


def build_tree(
    db: LandscapeDB,
    delta_e: float | None = None,
    top: float | None = None,
    include_trivial: bool = False,
) -> DisconnectivityTree:
    """Merge minima into superbasins over an ascending threshold ladder.

    delta_e defaults to 1/200 of the span from the global minimum to the
    highest transition state; top defaults to just above that highest
    transition state. The trivial minimum is excluded unless requested.
    """
    minima = [p for p in db.minima if include_trivial or "trivial" not in p.tags]
    if not minima:
        raise ValueError("no minima to analyze (all excluded?)")
    losses = {p.id: p.loss for p in minima}
    ids = set(losses)
    ts_loss = {p.id: p.loss for p in db.transition_states}
    edges = [
        (ts_loss[t], a, b)
        for t, a, b in db.edges
        if a in ids and b in ids and t in ts_loss
    ]
    e_min = min(losses.values())
    e_ts_max = max((e for e, _, _ in edges), default=e_min)
    e_leaf_max = max(losses.values())
    if delta_e is None:
        span = max(e_ts_max, e_leaf_max) - e_min
        delta_e = span / 200.0 if span > 0 else 1.0
    if delta_e <= 0:
        raise ValueError("delta_e must be positive")
    if top is None:
        top = max(e_ts_max, e_leaf_max) + delta_e
    n_levels = max(1, int(math.ceil((top - e_min) / delta_e)))
    thresholds = e_min + delta_e * np.arange(1, n_levels + 1)

    # union-find over ascending thresholds, recording merge events
    parent = {i: i for i in ids}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    node_of: dict[int, TreeNode] = {
        p.id: TreeNode(level=p.loss, members=frozenset([p.id]), min_id=p.id)
        for p in minima
    }
    edges = sorted(edges)
    ei = 0
    for level in thresholds:
        changed_roots = set()
        while ei < len(edges) and edges[ei][0] <= level:
            _, a, b = edges[ei]
            ei += 1
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
                changed_roots.add(find(a))
        for root in {find(r) for r in changed_roots}:
            group = [i for i in ids if find(i) == root]
            children = {id(node_of[i]): node_of[i] for i in group}
            merged = TreeNode(
                level=float(level),
                members=frozenset(group),
                children=tuple(
                    sorted(children.values(), key=lambda n: (min(n.members)))
                ),
            )
            for i in group:
                node_of[i] = merged
    roots = {id(node_of[i]): node_of[i] for i in ids}
    return DisconnectivityTree(
        thresholds=thresholds,
        roots=tuple(sorted(roots.values(), key=lambda n: min(n.members))),
    )


# ---------------------------------------------------------------------------
# layout and rendering


@dataclass(frozen=True)
class RenderStyle:
    width: int = 640
    height: int = 800
    margin: int = 40
    auc_by_min: dict | None = None
    scale_bar: float | None = None
    provenance: dict | None = None


BLUE_AUC = 0.5
RED_AUC = 0.75


def _branch_color(auc_value) -> str:
    if auc_value is None:
        return "black"
    if auc_value == BLUE_AUC:
        return "blue"
    if auc_value == RED_AUC:
        return "red"
    return "black"


@dataclass
class _Seg:
    x1: float
    y1: float
    x2: float
    y2: float
    color: str
    min_id: int | None = None
    loss: float | None = None


def _layout(tree: DisconnectivityTree, style: RenderStyle):
    """Deterministic segment layout: leaves ordered by loss inside each
    subtree, subtree width proportional to its leaf count."""
    leaves = tree.leaves
    if not leaves:
        raise ValueError("empty tree")
    losses = [l.level for l in leaves]
    tops = [r.level for r in tree.roots]
    e_lo, e_hi = min(losses), max(tops + losses)
    if e_hi == e_lo:
        e_hi = e_lo + 1.0
    w, h, m = style.width, style.height, style.margin

    def ypix(e: float) -> float:
        return m + (e_hi - e) * (h - 2 * m) / (e_hi - e_lo)

    segs: list[_Seg] = []
    auc = style.auc_by_min or {}

    def leaf_count(n: TreeNode) -> int:
        return 1 if n.is_leaf else sum(leaf_count(c) for c in n.children)

    def place(n: TreeNode, x0: float, x1: float, y_top: float) -> float:
        xc = 0.5 * (x0 + x1)
        if n.is_leaf:
            segs.append(
                _Seg(xc, y_top, xc, ypix(n.level), _branch_color(auc.get(n.min_id)),
                     min_id=n.min_id, loss=n.level)
            )
            return xc
        children = sorted(n.children, key=lambda c: (min(x.level for x in _leaves(c)), min(c.members)))
        total = sum(leaf_count(c) for c in children)
        xs = []
        cx = x0
        for c in children:
            cw = (x1 - x0) * leaf_count(c) / total
            xs.append(place(c, cx, cx + cw, ypix(n.level)))
            cx += cw
        segs.append(_Seg(min(xs), ypix(n.level), max(xs), ypix(n.level), "black"))
        segs.append(_Seg(xc, y_top, xc, ypix(n.level), "black"))
        return xc

    def _leaves(n: TreeNode):
        if n.is_leaf:
            return [n]
        return [x for c in n.children for x in _leaves(c)]

    total_leaves = len(leaves)
    cx = float(m)
    usable = w - 2 * m
    for r in tree.roots:
        rw = usable * leaf_count(r) / total_leaves
        place(r, cx, cx + rw, ypix(r.level))
        cx += rw
    return segs, ypix, (e_lo, e_hi)


def render_svg(tree: DisconnectivityTree, style: RenderStyle | None = None) -> str:
    """Standalone SVG 1.1 document of the disconnectivity graph.

    Branch lines carry data-min-id and data-loss attributes; leaf terminal
    y-positions are the exact affine image of the loss values.
    """
    style = style or RenderStyle()
    segs, ypix, (e_lo, e_hi) = _layout(tree, style)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{style.width}" height="{style.height}" '
        f'viewBox="0 0 {style.width} {style.height}">',
    ]
    if style.provenance is not None:
        blob = json.dumps(style.provenance, sort_keys=True).replace("--", "- -")
        lines.append(f"<!-- provenance: {blob} -->")
    lines.append(f'<!-- loss-range: {e_lo!r} {e_hi!r} -->')
    for s in segs:
        attrs = ""
        if s.min_id is not None:
            attrs = f' class="branch" data-min-id="{s.min_id}" data-loss="{s.loss!r}"'
        lines.append(
            f'<line x1="{s.x1:.3f}" y1="{s.y1:.6f}" x2="{s.x2:.3f}" y2="{s.y2:.6f}" '
            f'stroke="{s.color}" stroke-width="1.5"{attrs}/>'
        )
    if style.scale_bar:
        y0 = ypix(e_lo)
        y1 = ypix(e_lo + style.scale_bar)
        x = style.width - style.margin / 2
        lines.append(
            f'<line x1="{x}" y1="{y0:.3f}" x2="{x}" y2="{y1:.3f}" stroke="black" stroke-width="2"/>'
        )
        lines.append(
            f'<text x="{x - 4}" y="{(y0 + y1) / 2:.3f}" font-size="10" '
            f'text-anchor="end">{style.scale_bar:g}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_dot(tree: DisconnectivityTree, style: RenderStyle | None = None) -> str:
    """Graph description of the tree: nodes carry loss (and auc on leaves)."""
    style = style or RenderStyle()
    auc = style.auc_by_min or {}
    out = []
    if style.provenance is not None:
        out.append("// provenance: " + json.dumps(style.provenance, sort_keys=True))
    out.append("graph disconnectivity {")
    out.append('  node [shape=point];')
    counter = {"n": 0}

    def name(n: TreeNode) -> str:
        if n.is_leaf:
            return f"m{n.min_id}"
        counter["n"] += 1
        return f"b{counter['n']}"

    def walk(n: TreeNode, parent_name: str | None):
        nm = name(n)
        if n.is_leaf:
            a = auc.get(n.min_id)
            extra = f', auc="{a!r}"' if a is not None else ""
            out.append(f'  {nm} [loss="{n.level!r}"{extra}];')
        else:
            out.append(f'  {nm} [loss="{n.level!r}"];')
        if parent_name is not None:
            out.append(f"  {parent_name} -- {nm};")
        for c in sorted(n.children, key=lambda c: min(c.members)):
            walk(c, nm)

    for r in tree.roots:
        walk(r, None)
    out.append("}")
    return "\n".join(out) + "\n"


def render_figure(tree: DisconnectivityTree, path: str, style: RenderStyle | None = None) -> None:
    """Matplotlib rendering of the same layout, saved to path (png/pdf)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.collections import LineCollection

    style = style or RenderStyle()
    segs, ypix, (e_lo, e_hi) = _layout(tree, style)
    fig, ax = plt.subplots(figsize=(style.width / 100, style.height / 100))
    # invert pixel y back into loss for a natural vertical axis
    span = e_hi - e_lo
    usable = style.height - 2 * style.margin

    def to_loss(y):
        return e_hi - (y - style.margin) * span / usable

    lines = [[(s.x1, to_loss(s.y1)), (s.x2, to_loss(s.y2))] for s in segs]
    colors = [s.color for s in segs]
    ax.add_collection(LineCollection(lines, colors=colors, linewidths=1.2))
    ax.set_xlim(0, style.width)
    ax.set_ylim(e_lo - 0.02 * span, e_hi + 0.02 * span)
    ax.set_ylabel("loss")
    ax.set_xticks([])
    for side in ("top", "right", "bottom"):
        ax.spines[side].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
