"""R-tree over tile boundary rectangles, for viewport intersection queries.

Rectangles are half-open, so tiles sharing an edge do not intersect.
Built either by quadratic-split insertion or by sort-tile-recursive (STR)
bulk loading; immutable once built, queries are thread-safe.
"""

from __future__ import annotations

import math

from .model import Rect

MAX_ENTRIES = 16
MIN_ENTRIES = 6


class _Node:
    __slots__ = ("leaf", "entries", "rect")

    def __init__(self, leaf, entries):
        self.leaf = leaf
        self.entries = entries  # leaf: [(Rect, id)]; inner: [_Node]
        self.rect = None
        self.recompute_rect()

    def recompute_rect(self):
        rects = ([e[0] for e in self.entries] if self.leaf
                 else [n.rect for n in self.entries])
        if not rects:
            self.rect = None
            return
        self.rect = Rect(min(r.x0 for r in rects), min(r.y0 for r in rects),
                         max(r.x1 for r in rects), max(r.y1 for r in rects))


def _enlargement(rect: Rect, add: Rect) -> float:
    x0, y0 = min(rect.x0, add.x0), min(rect.y0, add.y0)
    x1, y1 = max(rect.x1, add.x1), max(rect.y1, add.y1)
    return (x1 - x0) * (y1 - y0) - (rect.x1 - rect.x0) * (rect.y1 - rect.y0)


def _entry_rect(node_or_pair):
    return node_or_pair.rect if isinstance(node_or_pair, _Node) else node_or_pair[0]


def _quadratic_split(entries):
    # Guttman's quadratic split: seed with the pair wasting the most area.
    worst, seeds = -math.inf, (0, 1)
    for i in range(len(entries)):
        for j in range(i + 1, len(entries)):
            ri, rj = _entry_rect(entries[i]), _entry_rect(entries[j])
            combined = ((max(ri.x1, rj.x1) - min(ri.x0, rj.x0))
                        * (max(ri.y1, rj.y1) - min(ri.y0, rj.y0)))
            waste = combined - (ri.x1 - ri.x0) * (ri.y1 - ri.y0) \
                - (rj.x1 - rj.x0) * (rj.y1 - rj.y0)
            if waste > worst:
                worst, seeds = waste, (i, j)
    a, b = [entries[seeds[0]]], [entries[seeds[1]]]
    rest = [e for k, e in enumerate(entries) if k not in seeds]
    for e in rest:
        remaining = len(rest) - len(a) - len(b) + 2
        if len(a) + remaining == MIN_ENTRIES:
            a.append(e)
            continue
        if len(b) + remaining == MIN_ENTRIES:
            b.append(e)
            continue
        ra = _group_rect(a)
        rb = _group_rect(b)
        e_rect = _entry_rect(e)
        (a if _enlargement(ra, e_rect) <= _enlargement(rb, e_rect) else b).append(e)
    return a, b


def _group_rect(entries):
    rects = [_entry_rect(e) for e in entries]
    return Rect(min(r.x0 for r in rects), min(r.y0 for r in rects),
                max(r.x1 for r in rects), max(r.y1 for r in rects))


class RTree:
    def __init__(self):
        self._root = _Node(leaf=True, entries=[])
        self._size = 0

    def __len__(self):
        return self._size

    @property
    def height(self) -> int:
        if self._size == 0:
            return 0
        h, node = 1, self._root
        while not node.leaf:
            node = node.entries[0]
            h += 1
        return h

    # -- insertion (quadratic split) --

    def insert(self, rect: Rect, ident):
        split = self._insert(self._root, rect, ident)
        if split is not None:
            self._root = _Node(leaf=False, entries=[self._root, split])
        self._size += 1

    def _insert(self, node: _Node, rect: Rect, ident):
        if node.leaf:
            node.entries.append((rect, ident))
        else:
            best = min(node.entries,
                       key=lambda ch: (_enlargement(ch.rect, rect),
                                       (ch.rect.x1 - ch.rect.x0) * (ch.rect.y1 - ch.rect.y0)))
            split = self._insert(best, rect, ident)
            if split is not None:
                node.entries.append(split)
        node.recompute_rect()
        if len(node.entries) > MAX_ENTRIES:
            a, b = _quadratic_split(node.entries)
            node.entries = a
            node.recompute_rect()
            return _Node(leaf=node.leaf, entries=b)
        return None

    # -- queries --

    def query_intersect(self, viewport: Rect) -> list:
        """Ids of every entry whose rectangle intersects the viewport (half-open)."""
        out = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node.rect is None or not node.rect.intersects(viewport):
                continue
            if node.leaf:
                out.extend(ident for rect, ident in node.entries
                           if rect.intersects(viewport))
            else:
                stack.extend(node.entries)
        return out


def build(entries) -> RTree:
    """Bulk-load an R-tree with sort-tile-recursive packing."""
    entries = list(entries)
    tree = RTree()
    tree._size = len(entries)
    if not entries:
        return tree
    leaves = _str_pack_leaves(entries)
    level = leaves
    while len(level) > 1:
        level = _str_pack_nodes(level)
    tree._root = level[0]
    return tree


def _balanced_groups(seq, max_size):
    """Split into ceil(len/max_size) groups of near-equal size (no underfull tail)."""
    n_groups = max(1, -(-len(seq) // max_size))
    base, extra = divmod(len(seq), n_groups)
    groups, pos = [], 0
    for g in range(n_groups):
        size = base + (1 if g < extra else 0)
        groups.append(seq[pos:pos + size])
        pos += size
    return groups


def _str_pack(items, rect_of, leaf):
    items = sorted(items, key=lambda it: rect_of(it).x0 + rect_of(it).x1)
    n_nodes = -(-len(items) // MAX_ENTRIES)
    n_slices = math.isqrt(n_nodes)
    if n_slices * n_slices < n_nodes:
        n_slices += 1
    nodes = []
    for vertical in _balanced_groups(items, -(-len(items) // n_slices)):
        vertical = sorted(vertical, key=lambda it: rect_of(it).y0 + rect_of(it).y1)
        nodes.extend(_Node(leaf=leaf, entries=grp)
                     for grp in _balanced_groups(vertical, MAX_ENTRIES))
    return nodes


def _str_pack_leaves(entries):
    return _str_pack(entries, lambda e: e[0], leaf=True)


def _str_pack_nodes(nodes):
    return _str_pack(nodes, lambda nd: nd.rect, leaf=False)
