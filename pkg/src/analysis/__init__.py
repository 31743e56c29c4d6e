# src/analysis/__init__.py
from .report_generator import ReportGenerator

__all__ = ["ReportGenerator"]
