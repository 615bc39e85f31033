"""Approximate bespoke MLP classifiers for printed electronics.

Integer MLPs whose coefficients are hardwired into shift/add logic, with
area-aware retraining, truncated approximate summation, a design-space
exploration over the approximation knobs and Verilog generation.
"""

__version__ = "0.1.0"
