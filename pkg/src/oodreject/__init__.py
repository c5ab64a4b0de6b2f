"""Selective classification with rejection of out-of-distribution inputs.

Modules: :mod:`~oodreject.synth_world` (synthetic Gaussian world),
:mod:`~oodreject.reject_models` (rules and their theoretical rates),
:mod:`~oodreject.posthoc` (empirical sweeps and threshold tuning),
:mod:`~oodreject.curves` (ROC / PR / RC / CCR curves),
:mod:`~oodreject.finite_lp` (the finite-space linear program) and
:mod:`~oodreject.cli`.
"""

__version__ = "0.1.0"
