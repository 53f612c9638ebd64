"""Hybrid disentangled-attention encoder + gated broad learning system for cyberbullying detection."""

__version__ = "0.1.0"
