"""Bayesian structured mediation analysis with unobserved confounders.

Thin wrapper around the compiled core; everything public lives in
:mod:`basmu._core`.
"""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
