"""Tests for app.training."""
