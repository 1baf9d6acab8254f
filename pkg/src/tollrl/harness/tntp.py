"""Reader and writer for TNTP network (``*_net.tntp``) and trip (``*_trips.tntp``) files."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

LINK_FIELDS = ("init_node", "term_node", "capacity", "length", "free_flow_time", "b", "power",
               "speed", "toll", "link_type")
_META = re.compile(r"^\s*<([^>]+)>(.*)$")


class TntpParseError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}" if lineno else f"{path}: {msg}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class TntpLink:
    init_node: int
    term_node: int
    capacity: float
    length: float
    free_flow_time: float
    b: float = 0.15
    power: float = 4.0
    speed: float = 0.0
    toll: float = 0.0
    link_type: int = 1


@dataclass
class TntpNetwork:
    n_nodes: int
    links: list
    metadata: dict = field(default_factory=dict)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def link(self, number: int) -> TntpLink:
        """Link by its 1-based position in the file, the usual way links are numbered."""
        return self.links[number - 1]


def _split_metadata(lines, path):
    meta = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("~"):
            continue
        m = _META.match(line)
        if m is None:
            raise TntpParseError(path, lineno, f"expected a <TAG> metadata line, got {line[:40]!r}")
        tag, value = m.group(1).strip().upper(), m.group(2).strip()
        if tag == "END OF METADATA":
            return meta, lineno
        meta[tag] = value
    raise TntpParseError(path, 0, "missing <END OF METADATA>")


def _int_tag(meta, tag, path):
    if tag not in meta:
        raise TntpParseError(path, 0, f"missing <{tag}> in header")
    try:
        return int(float(meta[tag]))
    except ValueError:
        raise TntpParseError(path, 0, f"<{tag}> is not a number: {meta[tag]!r}") from None


def _data_tokens(line):
    line = line.split("~", 1)[0].strip()
    if line.endswith(";"):
        line = line[:-1]
    return line.split()


def parse_tntp_net(text: str, path: str = "<string>") -> TntpNetwork:
    lines = text.splitlines()
    if not any(l.strip() for l in lines):
        raise TntpParseError(path, 0, "empty file")
    meta, end = _split_metadata(lines, path)
    n_nodes = _int_tag(meta, "NUMBER OF NODES", path)
    n_links = _int_tag(meta, "NUMBER OF LINKS", path)
    links = []
    for lineno in range(end + 1, len(lines) + 1):
        tokens = _data_tokens(lines[lineno - 1])
        if not tokens:
            continue
        if len(tokens) < 5 or len(tokens) > len(LINK_FIELDS):
            raise TntpParseError(path, lineno, f"expected 5 to {len(LINK_FIELDS)} link fields, "
                                               f"got {len(tokens)}")
        try:
            vals = [float(t) for t in tokens]
        except ValueError as exc:
            raise TntpParseError(path, lineno, f"non-numeric link field ({exc})") from None
        kw = dict(zip(LINK_FIELDS, vals))
        for key in ("init_node", "term_node", "link_type"):
            if key in kw:
                if kw[key] != int(kw[key]):
                    raise TntpParseError(path, lineno, f"{key} must be an integer")
                kw[key] = int(kw[key])
        link = TntpLink(**kw)
        for node in (link.init_node, link.term_node):
            if not 1 <= node <= n_nodes:
                raise TntpParseError(path, lineno, f"node {node} outside 1..{n_nodes}")
        if not link.capacity > 0:
            raise TntpParseError(path, lineno, f"capacity must be positive, got {link.capacity}")
        if link.free_flow_time < 0:
            raise TntpParseError(path, lineno, "negative free-flow time")
        links.append(link)
    if len(links) != n_links:
        raise TntpParseError(path, 0, f"header declares {n_links} links, found {len(links)}")
    return TntpNetwork(n_nodes, links, meta)


def load_tntp(path) -> TntpNetwork:
    with open(path, encoding="utf-8") as fh:
        return parse_tntp_net(fh.read(), str(path))


def _num(x) -> str:
    return repr(int(x)) if float(x).is_integer() else repr(float(x))


def dump_tntp_net(net: TntpNetwork) -> str:
    meta = dict(net.metadata)
    meta["NUMBER OF NODES"] = str(net.n_nodes)
    meta["NUMBER OF LINKS"] = str(net.n_links)
    out = [f"<{k}> {v}" for k, v in meta.items()]
    out += ["<END OF METADATA>", "", "~\t" + "\t".join(LINK_FIELDS) + "\t;"]
    for link in net.links:
        out.append("\t" + "\t".join(_num(getattr(link, f)) for f in LINK_FIELDS) + "\t;")
    return "\n".join(out) + "\n"


def save_tntp(net: TntpNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_tntp_net(net))


# -- trip tables -----------------------------------------------------------------


def parse_tntp_trips(text: str, path: str = "<string>") -> dict[tuple[int, int], float]:
    """``{(origin, destination): flow}`` for every entry listed in the file."""
    lines = text.splitlines()
    if not any(l.strip() for l in lines):
        raise TntpParseError(path, 0, "empty file")
    _, end = _split_metadata(lines, path)
    trips: dict[tuple[int, int], float] = {}
    origin = None
    for lineno in range(end + 1, len(lines) + 1):
        line = lines[lineno - 1].split("~", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("origin"):
            parts = line.split()
            if len(parts) != 2:
                raise TntpParseError(path, lineno, "malformed Origin line")
            try:
                origin = int(parts[1])
            except ValueError:
                raise TntpParseError(path, lineno, f"bad origin {parts[1]!r}") from None
            continue
        if origin is None:
            raise TntpParseError(path, lineno, "destination entries before any Origin line")
        for entry in line.split(";"):
            entry = entry.strip()
            if not entry:
                continue
            dest, sep, flow = entry.partition(":")
            if not sep:
                raise TntpParseError(path, lineno, f"expected 'dest : flow', got {entry!r}")
            try:
                trips[(origin, int(dest))] = float(flow)
            except ValueError:
                raise TntpParseError(path, lineno, f"bad trip entry {entry!r}") from None
    return trips


def load_trips(path) -> dict[tuple[int, int], float]:
    with open(path, encoding="utf-8") as fh:
        return parse_tntp_trips(fh.read(), str(path))
