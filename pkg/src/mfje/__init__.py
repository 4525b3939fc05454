"""Mean-field jump-process engine.

Simulates cohorts of interacting jump processes, solves the associated
linear and non-linear forward equations, and evaluates insurance
liabilities together with their mean-field approximations.
"""

__version__ = "0.1.0"
