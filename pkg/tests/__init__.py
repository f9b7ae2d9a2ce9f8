"""Tests for the cleaning corpus pipeline."""
