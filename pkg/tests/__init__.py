"""Tests for detail-aligned-vae."""
