"""Small-time behaviour of purely non-Gaussian Levy processes: functionals, tests, constructions and simulation."""

__version__ = "0.1.0"
