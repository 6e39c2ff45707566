"""Spreadsheet structure extraction and interactive coefficient
refinement.

The package reads a workbook from a canonical JSON format, parses its
formulas, derives the cell-level dataflow graph and the run-based group
structure, evaluates values deterministically, and refines numeric
formula coefficients with an annotation-driven genetic algorithm.  The
``wia`` command line and an HTTP service expose the same pipeline.
"""

__version__ = "0.1.0"
