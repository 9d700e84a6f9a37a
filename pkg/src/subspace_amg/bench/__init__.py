"""Experiment orchestration: corpora, training, energy sweeps, solver benches."""
