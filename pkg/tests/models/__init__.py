"""Tests for app.models."""
