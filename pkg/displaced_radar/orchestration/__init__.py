"""Orchestration layer: scene presets and Monte-Carlo experiment harness."""
