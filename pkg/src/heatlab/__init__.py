"""Exact spectra, certified heat traces and characteristic-number checks on model geometries."""

from __future__ import annotations

__version__ = "0.1.0"
