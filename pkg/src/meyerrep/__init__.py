"""Stochastic representation of band-measurable processes on finite trees.

Subpackages:

- ``probspace``: finite filtered trees, Meyer information bands, stopping
  times and conditional expectations;
- ``processes``: ladlag step processes, random measures, cost fields,
  projections and input validators;
- ``snell``: envelope recursion, contact classification, divided stopping
  and brute-force oracles;
- ``representation``: the maximal signal solver, its ess-inf
  characterization and the identity verifier;
- ``stopping``: the universal trigger rule and its optimality certificate;
- ``levy``: Monte Carlo engine for the compound-Poisson irreversible
  investment example;
- ``cli``: scenario files and the ``meyerrep`` command.
"""

from . import probspace, processes, snell, representation, stopping  # noqa: F401

__version__ = "0.1.0"
