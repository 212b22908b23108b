import io
import json
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

import pandas as pd

from topobc.state_model import (
    CsitState,
    StateDistribution,
    TopologyState,
    as_fraction,
    parse_alpha,
    require_valid,
)

logger = logging.getLogger(__name__)

MANIFEST_PREFIX = "# "
FLOAT_FORMAT = "%.6f"


class ConfigError(ValueError):
    """Bad configuration file; names the JSON field and, for syntax errors, the line/column."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None, column: Optional[int] = None):
        self.field = field
        self.line = line
        self.column = column
        where = []
        if field:
            where.append(f"field {field}")
        if line is not None:
            where.append(f"line {line}, column {column}")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)


# ======================
# DISTRIBUTION FILES
# ======================

def _read_json(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e.msg}", line=e.lineno, column=e.colno) from e


def _field(value, path: str, parse):
    try:
        return parse(value)
    except (ValueError, TypeError, AttributeError) as e:
        raise ConfigError(f"bad value {value!r}: {e}", field=path) from e


def parse_distribution(data: Mapping) -> StateDistribution:
    """
    {"alpha": "1/2", "states": [{"csit": "PN", "topology": "SW", "fraction": 0.5}, ...]}
    Duplicate states are summed.
    """
    if not isinstance(data, Mapping):
        raise ConfigError("top level must be an object")
    if "alpha" not in data:
        raise ConfigError("missing key", field="alpha")
    states = data.get("states")
    if not isinstance(states, list) or not states:
        raise ConfigError("expected a nonempty list", field="states")

    alpha = _field(data["alpha"], "alpha", parse_alpha)

    entries: Dict = {}
    for i, state in enumerate(states):
        where = f"states[{i}]"
        if not isinstance(state, Mapping):
            raise ConfigError("expected an object", field=where)
        for key in ("csit", "topology", "fraction"):
            if key not in state:
                raise ConfigError("missing key", field=f"{where}.{key}")

        csit = _field(state["csit"], f"{where}.csit", CsitState.parse)
        topo = _field(state["topology"], f"{where}.topology", TopologyState.parse)
        fraction = _field(state["fraction"], f"{where}.fraction", as_fraction)
        entries[(csit, topo)] = entries.get((csit, topo), 0) + fraction

    dist = StateDistribution(entries, alpha)
    try:
        require_valid(dist)
    except ValueError as e:
        raise ConfigError(str(e), field="states") from e
    return dist


def load_distribution(path) -> StateDistribution:
    path = Path(path)
    dist = parse_distribution(_read_json(path))
    logger.info(f"Loaded distribution from {path} | {dist.describe()}")
    return dist


def dump_distribution(dist: StateDistribution) -> dict:
    return {
        "alpha": str(dist.alpha),
        "states": [
            {"csit": c.label, "topology": t.label, "fraction": str(as_fraction(dist.entries[(c, t)]))}
            for c, t in dist.support()
        ],
    }


# ======================
# CSV + MANIFEST
# ======================

def render_csv(table: pd.DataFrame, footer_lines: Iterable[str] = ()) -> str:
    buf = io.StringIO()
    table.to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    body = buf.getvalue()
    for line in footer_lines:
        body += line + "\n"
    return body


def write_csv_with_manifest(
    path,
    manifest: Mapping[str, object],
    table: pd.DataFrame,
    footer_lines: Iterable[str] = (),
) -> Path:
    """Manifest as '# key: value' header lines, then the CSV body; written atomically."""
    path = Path(path)
    header = "".join(f"{MANIFEST_PREFIX}{k}: {v}\n" for k, v in manifest.items())
    content = header + render_csv(table, footer_lines)

    if path.parent and not path.parent.exists():
        os.makedirs(path.parent, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_text(content)
        tmp.replace(path)
    except OSError:
        logger.exception(f"Failed to write {path}")
        raise
    logger.info(f"Wrote {len(table)} rows to {path}")
    return path


def read_manifest(path) -> Dict[str, str]:
    manifest = {}
    for line in Path(path).read_text().splitlines():
        if not line.startswith(MANIFEST_PREFIX):
            break
        key, _, value = line[len(MANIFEST_PREFIX):].partition(": ")
        manifest[key] = value
    return manifest


def read_body(path) -> str:
    """CSV body without the manifest header."""
    lines = Path(path).read_text().splitlines(keepends=True)
    return "".join(line for line in lines if not line.startswith(MANIFEST_PREFIX))
