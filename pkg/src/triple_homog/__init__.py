"""Boundary-triple homogenisation workbench for the 1D two-phase periodic wave equation."""
