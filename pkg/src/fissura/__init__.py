"""fissura: sliding-window surface defect detection workbench."""

__version__ = "0.1.0"
