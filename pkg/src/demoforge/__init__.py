"""demoforge: ESDM demo parsing, match analytics and round win-probability models."""

from . import model
from .codec import EsdmHeader, read_demo, write_demo
from .errors import DemoforgeError
from .jsonio import emit_json, load_json, write_json
from .matchgen import GenConfig, GroundTruth, generate_match, inject_anomalies
from .parser import DemoParser, parse_demo

__version__ = "0.1.0"

__all__ = [
    "model", "EsdmHeader", "read_demo", "write_demo", "DemoforgeError", "emit_json", "load_json", "write_json",
    "GenConfig", "GroundTruth", "generate_match", "inject_anomalies", "DemoParser", "parse_demo",
    "__version__",
]
