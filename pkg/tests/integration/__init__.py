"""Acceptance-scale tests for discrete-cbo."""
