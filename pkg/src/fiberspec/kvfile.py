"""Line-oriented ``key=value`` text files with a versioned header line."""

from __future__ import annotations

from pathlib import Path


def format_float(x: float) -> str:
    # repr round-trips exactly through float()
    return repr(float(x))


def dumps(header: str, items: list[tuple[str, str]], comments: list[str] = ()) -> str:
    lines = [f"# {header}"]
    lines += [f"# {c}" for c in comments]
    lines += [f"{k}={v}" for k, v in items]
    return "\n".join(lines) + "\n"


def loads(text: str, header: str) -> dict[str, str]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {header}":
        raise ValueError(f"expected header '# {header}'")
    out: dict[str, str] = {}
    for n, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read(path: str | Path, header: str) -> dict[str, str]:
    return loads(Path(path).read_text(), header)


def parse_pair(value: str) -> tuple[float, float]:
    a, b = value.split(",")
    return float(a), float(b)
