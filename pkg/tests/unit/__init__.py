"""Unit tests for discrete-cbo."""
