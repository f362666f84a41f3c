"""Tests for the causal parsing package."""
