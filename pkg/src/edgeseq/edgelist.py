"""Plain-text edge lists: ``u v`` per line, blank line between graphs, ``#`` comments.

A ``# nodes: N`` comment inside a block fixes the node count (so isolated
nodes survive a round trip); otherwise it is ``1 + max endpoint``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

from .graph import Graph

_NODES_RE = re.compile(r"#\s*nodes\s*[:=]\s*(\d+)\s*$")


class EdgeListParseError(ValueError):
    def __init__(self, message: str, line: int, source: str = "<string>"):
        super().__init__(f"{source}:{line}: {message}")
        self.line = line
        self.source = source


@dataclass
class RawBlock:
    """A parsed block before graph validation."""

    edges: list[tuple[int, int]]
    num_nodes: int | None
    first_line: int


def parse_blocks(text: str, source: str = "<string>") -> list[RawBlock]:
    blocks: list[RawBlock] = []
    cur: RawBlock | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            if cur is not None:
                blocks.append(cur)
                cur = None
            continue
        if cur is None:
            cur = RawBlock([], None, lineno)
        if line.startswith("#"):
            m = _NODES_RE.match(line)
            if m:
                cur.num_nodes = int(m.group(1))
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListParseError(f"expected 'u v', got {raw!r}", lineno, source)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(f"non-integer endpoint in {raw!r}", lineno, source) from None
        if u < 0 or v < 0:
            raise EdgeListParseError(f"negative endpoint in {raw!r}", lineno, source)
        cur.edges.append((u, v))
    if cur is not None:
        blocks.append(cur)
    # comment-only blocks carry no graph
    return [b for b in blocks if b.edges or b.num_nodes]


def format_graph(g: Graph, header: str | None = None) -> str:
    lines = []
    if header:
        lines.append(f"# {header}")
    lines.append(f"# nodes: {g.num_nodes}")
    lines.extend(f"{u} {v}" for u, v in g.edges)
    return "\n".join(lines) + "\n"


def write_graphs(graphs: Iterable[Graph], path: str | Path | TextIO) -> None:
    text = "\n".join(format_graph(g, header=f"graph {i}") for i, g in enumerate(graphs))
    if isinstance(path, (str, Path)):
        Path(path).write_text(text)
    else:
        path.write(text)


def read_graphs(path: str | Path) -> list[Graph]:
    """Strict reader: any invalid block raises."""
    path = Path(path)
    out = []
    for b in parse_blocks(path.read_text(), str(path)):
        out.append(Graph.from_edges(b.edges, b.num_nodes))
    return out
