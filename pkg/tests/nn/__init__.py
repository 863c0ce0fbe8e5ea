"""Tests for app.nn."""
