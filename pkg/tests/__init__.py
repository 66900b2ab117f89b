"""Test suite for the knowledge-transfer toolkit."""
