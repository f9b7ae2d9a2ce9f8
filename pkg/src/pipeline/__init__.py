"""
Command pipeline for the mel decoder.

gen-data -> train-teacher -> distill -> sample -> eval, plus bench.
"""

from src.pipeline.orchestrator import PipelineOrchestrator

__all__ = ["PipelineOrchestrator"]
