"""Test suite for the corridor obstacle detection pipeline."""
