"""Groundwater surrogate workbench."""
