"""Tests for the groundwater surrogate workbench."""
