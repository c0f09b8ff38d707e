"""Experiment configuration, datasets, drivers and the ``rfsample`` CLI."""
