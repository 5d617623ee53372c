"""Disaggregated (vision server / language server) and monolithic serving."""
from .client import PipelineClient
from .compute import decode_token, fused_checksum, language_compute
from .config import LIGHT_PROFILE, TOPOLOGIES, ComputeProfile, ServingConfig, dump_config, load_config
from .language_server import LanguageServer
from .monolith import MonolithServer, serve_request
from .pipeline import Deployment, launch_topology, run_monolith, run_pipeline
from .records import Request, Response, Timings
from .trace import Span, TraceLog, cross_request_overlaps
from .vision_server import VisionServer

__all__ = [
    "ComputeProfile", "Deployment", "LIGHT_PROFILE", "LanguageServer", "MonolithServer",
    "PipelineClient", "Request", "Response", "ServingConfig", "Span", "TOPOLOGIES", "Timings",
    "TraceLog", "VisionServer", "cross_request_overlaps", "decode_token", "dump_config",
    "fused_checksum", "language_compute", "launch_topology", "load_config", "run_monolith",
    "run_pipeline", "serve_request",
]
