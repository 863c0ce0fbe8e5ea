"""Tests for app.physics."""
