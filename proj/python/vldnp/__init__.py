# Copyright (C) 2026 The vldnp Authors
# SPDX-License-Identifier: Apache-2.0
"""Dynamic negative guidance on concept-labeled Gaussian mixtures.

Configs are plain dicts with the same keys as the JSON files read by the
``vldnp`` command line tool. Results come back as lists of dicts.
"""

from __future__ import annotations

import csv
import io
import json
import os
from typing import Any, Mapping

from . import _core
from ._core import VldnpError, World, __version__, alpha_bars, step_grid, tilted_samples

__all__ = [
    "VldnpError",
    "World",
    "__version__",
    "alpha_bars",
    "config_digest",
    "pareto",
    "resolve_config",
    "sample",
    "step_grid",
    "sweep",
    "tilted_samples",
]

_NUMERIC = {"omega_pos", "omega_neg", "asr", "toxic_rate", "alignment", "frechet"}
_INTEGER = {"n", "seed"}


def _config_text(config: Mapping[str, Any] | str | os.PathLike | None) -> tuple[str, str]:
    """JSON text and base directory for a dict, a JSON file path, or None."""
    if config is None:
        return "{}", ""
    if isinstance(config, Mapping):
        return json.dumps(dict(config)), ""
    path = os.fspath(config)
    with open(path, encoding="utf-8") as fh:
        return fh.read(), os.path.dirname(os.path.abspath(path))


def _parse_csv(text: str) -> list[dict[str, Any]]:
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed: dict[str, Any] = {}
        for key, value in row.items():
            if key in _NUMERIC:
                parsed[key] = float(value) if value != "" else float("nan")
            elif key in _INTEGER:
                parsed[key] = int(value)
            elif key in {"dominated", "dominated_3axis"}:
                parsed[key] = value == "1"
            else:
                parsed[key] = value
        rows.append(parsed)
    return rows


def resolve_config(config: Mapping[str, Any] | str | os.PathLike | None = None) -> dict[str, Any]:
    """The configuration with every default filled in."""
    text, base = _config_text(config)
    return json.loads(_core.resolve_config(text, base))


def config_digest(config: Mapping[str, Any] | str | os.PathLike | None = None) -> str:
    text, base = _config_text(config)
    return _core.config_digest(text, base)


def sample(config: Mapping[str, Any] | str | os.PathLike | None = None, index: int = 0,
           record_steps: bool = False) -> tuple[tuple[float, float], list[dict[str, Any]]]:
    """Runs trajectory ``index`` of the configured single-run guidance."""
    text, base = _config_text(config)
    x0, events = _core.sample(text, index, record_steps, base)
    return x0, [json.loads(line) for line in events.splitlines() if line]


def sweep(config: Mapping[str, Any] | str | os.PathLike | None = None, out: str | os.PathLike | None = None,
          force: bool = False) -> list[dict[str, Any]]:
    """Runs the omega_neg sweep; writes the report directory when ``out`` is given."""
    text, base = _config_text(config)
    return _parse_csv(_core.sweep(text, os.fspath(out) if out is not None else "", force, base))


def pareto(results: list[Mapping[str, Any]] | str | os.PathLike) -> list[dict[str, Any]]:
    """Pareto flags for sweep results given as rows or as a results.csv path."""
    if isinstance(results, (str, os.PathLike)):
        with open(results, encoding="utf-8") as fh:
            text = fh.read()
    else:
        fields = list(results[0].keys()) if results else []
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in results:
            writer.writerow({k: ("1" if v is True else "0" if v is False else v) for k, v in row.items()})
        text = buf.getvalue()
    return _parse_csv(_core.pareto(text))
