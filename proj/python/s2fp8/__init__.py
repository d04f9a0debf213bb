"""Shifted-and-squeezed FP8 codec and training simulator."""

import json as _json

from ._s2fp8 import (
    ConfigError,
    Error,
    IoError,
    NumericError,
    ShapeError,
    compute_statistics,
    decode,
    encode,
    format_properties,
    format_table,
    s2fp8_truncate,
    truncate_rne,
)
from . import _s2fp8


def run_experiment(config, out_dir=""):
    """Run an experiment from a config dict; returns the summary dict."""
    return _json.loads(_s2fp8.run_experiment(_json.dumps(config), str(out_dir)))


def checkgrad(config):
    return _s2fp8.checkgrad(_json.dumps(config))


__all__ = [
    "ConfigError", "Error", "IoError", "NumericError", "ShapeError",
    "checkgrad", "compute_statistics", "decode", "encode", "format_properties",
    "format_table", "run_experiment", "s2fp8_truncate", "truncate_rne",
]
