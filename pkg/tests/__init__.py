"""discrete-cbo test suite."""
