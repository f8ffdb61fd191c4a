"""Identifiability of VR motion telemetry under controlled train-test delay and duration."""

__version__ = "0.1.0"
