"""Tests for training history tracking."""
