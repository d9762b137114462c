"""Automatic defect-segmentation annotations for PV electroluminescence images."""

__version__ = "0.1.0"
