"""Sparsely-gated expert-mixture policy networks, their dense baselines,
and the surrounding tooling: observation layout, domain randomization,
reward terms, a depth-image pipeline, and an inference latency harness."""

from . import (analysis, bench, depth_pipeline, domain_rand, imgfile, moe,
               policy_net, rewards, serialization, tensor_core)

__all__ = ["analysis", "bench", "depth_pipeline", "domain_rand", "imgfile",
           "moe", "policy_net", "rewards", "serialization", "tensor_core"]

__version__ = "0.1.0"
