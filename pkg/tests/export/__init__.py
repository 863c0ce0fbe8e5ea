"""Tests for app.export."""
