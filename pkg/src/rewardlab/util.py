"""Small shared helpers: atomic file writes, JSON-lines framing, hashing, seeds."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

from rewardlab.errors import DataFormatError


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write `text` to `path` via a temp file + rename, so readers never see
    a partial file and failed commands leave no output behind."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json_line(obj) -> str:
    # Default float repr is the shortest round-tripping decimal, which is what
    # the file formats rely on for exact write -> load -> write cycles.
    return json.dumps(obj, ensure_ascii=False)


def write_jsonl(path: str | Path, header: dict, rows) -> None:
    lines = [dump_json_line(header)]
    lines.extend(dump_json_line(r) for r in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_jsonl(path: str | Path):
    """Yield (line_number, parsed_object) for every non-blank line."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                yield lineno, json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataFormatError(path, lineno, f"invalid JSON record: {exc.msg}") from exc


def expect_header(path: str | Path, obj: dict, lineno: int, format_name: str) -> dict:
    if not isinstance(obj, dict) or obj.get("format") != format_name:
        raise DataFormatError(path, lineno, f"expected a {format_name!r} header record")
    return obj


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def derive_seed(root: int, *labels: object) -> int:
    """Deterministically derive an independent 63-bit seed for a named consumer.

    Keeps sub-component streams stable when unrelated configuration changes:
    the split seed, the model-init seed, etc. all hang off one root seed.
    """
    text = f"{int(root)}|" + "|".join(str(x) for x in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
