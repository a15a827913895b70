"""Run-directory bookkeeping shared by the CLI commands.

Every command writes into its output directory: the fully resolved config,
sha256 hashes of its inputs, the declared outputs, and a machine-readable
status. Nothing here embeds wall-clock state, so reruns with identical
inputs produce byte-identical run directories.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: str | Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def hash_inputs(inputs: list[Path]) -> dict[str, str]:
    out = {}
    for p in sorted(set(map(Path, inputs))):
        if p.is_dir():
            for f in sorted(q for q in p.rglob("*") if q.is_file()):
                out[str(f)] = sha256_file(f)
        else:
            out[str(p)] = sha256_file(p)
    return out


def finalize_run(
    out_dir: Path,
    command: str,
    config: dict,
    inputs: list[Path],
    outputs: list[Path],
) -> bool:
    """Write resolved config + status; returns True iff every declared
    output exists and is non-empty."""
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "resolved_config.json", {"command": command, "version": __version__, **config})
    ok = all(Path(o).is_file() and Path(o).stat().st_size > 0 for o in outputs)
    status = {
        "command": command,
        "version": __version__,
        "ok": ok,
        "inputs_sha256": hash_inputs(inputs),
        "outputs": [str(o) for o in outputs],
    }
    write_json(out_dir / "status.json", status)
    return ok
