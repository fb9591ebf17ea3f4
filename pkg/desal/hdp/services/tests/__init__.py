"""Tests for :mod:`.services`."""
