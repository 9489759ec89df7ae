"""Benchmark suites: MSO grid search, memory capacity and timing."""
