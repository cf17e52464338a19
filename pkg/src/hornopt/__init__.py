"""Pareto-optimal refinement type inference for a small functional language.

The pipeline: parse a program (:mod:`hornopt.surface`), generate an
existentially quantified Horn clause constraint set from the typing rules
(:mod:`hornopt.gen`), then search for a constraint solution that is optimal
for the user's maximize/minimize preferences (:mod:`hornopt.optimizer`) by
template instantiation and Farkas-style reduction to SMT
(:mod:`hornopt.solver`, :mod:`hornopt.smtio`).
"""

__version__ = "0.1.0"
