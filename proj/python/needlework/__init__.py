"""Needle decomposition of convex domains: Python front end to the C++ core."""

import json
import os

from ._core import (
    Domain,
    Expr,
    Needle,
    NeedleError,
    affine_needle,
    box,
    check_cd,
    equality_residual,
    fmc_sweep,
    four_functions,
    inf,
    interval,
    iso_profile,
    lambda_knd,
    needle_transform,
    poincare,
    polygon,
    regular_polygon,
    sample,
    sampled_needle,
    set_thread_count,
    solve_transportation,
    spectral_gap,
    tabulate,
    thread_count,
)
from . import _core


def _config_text(config):
    """Returns (json text, base dir) for a dict or a path to a JSON file."""
    if isinstance(config, (str, os.PathLike)):
        path = os.fspath(config)
        with open(path, encoding="utf-8") as fh:
            return fh.read(), os.path.dirname(os.path.abspath(path))
    return json.dumps(config), os.getcwd()


def decompose(config):
    """Runs the full pipeline. Returns artifacts (name -> text), verdicts and
    the parsed summary."""
    text, base = _config_text(config)
    out = _core.decompose_json(text, base)
    out["summary"] = json.loads(out["artifacts"]["summary.json"])
    return out


def run(command, config):
    """Runs one of poincare, iso, buser, fourfn, fmc, needle1d; returns verdicts."""
    text, base = _config_text(config)
    return _core.run_json(command, text, base)


__all__ = [name for name in dir() if not name.startswith("_") and name not in ("json", "os")]
