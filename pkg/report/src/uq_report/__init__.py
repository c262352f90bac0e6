"""Offline report generation for spectral-uq result bundles."""

from .bundle import MetricsRow, ResultsBundle, SampleRecord, load_bundle
from .figures import (fit_power_law, reliability_curve, render_decomposition,
                      render_reliability, render_scaling)
from .summary import load_thresholds, render_summary

__version__ = "0.1.0"
