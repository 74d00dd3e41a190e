"""CSV reports carrying the run configuration as a comment header."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional

import pandas as pd

logger = logging.getLogger(__name__)


def write_csv(frame: pd.DataFrame, path: str | Path, provenance: Optional[dict] = None) -> Path:
    """Write ``frame`` preceded by ``# config_hash=`` and ``# config=`` lines.

    ``provenance`` is ``{"config_hash": str, "config": dict}``; numbers are
    written with 17 significant digits.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if provenance:
            fh.write(f"# config_hash={provenance['config_hash']}\n")
            fh.write(f"# config={json.dumps(provenance['config'], sort_keys=True)}\n")
        frame.to_csv(fh, index=False, float_format="%.17g")
    logger.info("Wrote %d rows to %s", len(frame), path)
    return path


def read_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def read_provenance(path: str | Path) -> dict:
    out = {}
    with Path(path).open() as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            out[key] = json.loads(value) if key == "config" else value
    return out
