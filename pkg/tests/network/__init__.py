"""Tests for app.network."""
