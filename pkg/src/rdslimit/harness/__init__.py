"""Experiment configuration, drivers and the command-line interface."""
