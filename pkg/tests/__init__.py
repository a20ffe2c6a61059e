"""Tests for the quantum uplink package."""
