"""Tests for app.datagen."""
