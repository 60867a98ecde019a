"""Shared plumbing: seeded substreams, atomic file writes, hashing.

All randomness in the package flows from one root seed through named
substreams so that module-level reproducibility survives pipeline
reordering: `substream(seed, name)` always yields the same generator for
the same (seed, name) pair, on every platform.
"""

import hashlib
import json
import os
import tempfile
import zlib

import numpy as np


def substream(seed, name):
    """Named, platform-stable child generator of a root seed."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def substream_seed(seed, name):
    """Integer seed of the named substream (for APIs that take a seed)."""
    key = zlib.crc32(name.encode("utf-8"))
    return int(np.random.SeedSequence([int(seed), key]).generate_state(1)[0])


def atomic_write_text(path, text):
    """Write text to `path` via a temp file + rename in the same directory."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    """Deterministic JSON artifact (sorted keys, fixed layout, trailing \\n)."""
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_csv(path, header, rows):
    """Deterministic CSV artifact: floats via repr (shortest round-trip)."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _csv_cell(v):
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def artifact_hash(path):
    """Content hash of a file, or of a directory's (name, hash) listing."""
    path = os.fspath(path)
    if os.path.isfile(path):
        return sha256_file(path)
    if os.path.isdir(path):
        h = hashlib.sha256()
        for root, dirs, files in sorted(os.walk(path)):
            dirs.sort()
            for name in sorted(files):
                full = os.path.join(root, name)
                rel = os.path.relpath(full, path)
                h.update(f"{rel}:{sha256_file(full)}\n".encode("utf-8"))
        return h.hexdigest()
    raise FileNotFoundError(path)
