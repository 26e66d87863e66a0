"""Module to enable discoverability of tests."""
