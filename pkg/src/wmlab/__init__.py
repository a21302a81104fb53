"""Desk-scale laboratory for N-gram code watermarks and random-walk attacks.

Layers, bottom up:

* ``minilang`` -- the toy language: lexer, parser, serializer, interpreter,
  tasks and the test-suite oracle.
* ``model`` -- template generator with exact next-token distributions.
* ``watermark`` -- green/red, entropy-gated, tournament and ideal schemes
  with keyed N-gram hashing and z-score detection.
* ``rules`` -- the attacker: ergodic transformation rules, random walks,
  normalizer/de-normalizer and equivalent-space sampling.
* ``chain`` -- exact Markov analysis: enumeration, stationary distribution,
  mixing times, canonical paths and the congestion bound.
* ``stats`` -- normal CDF/quantile, AUROC vs the N(0,1) null,
  Anderson-Darling, rate estimates.
* ``harness`` -- corpora, attack/detect pipelines, the impossibility and
  distribution-consistency experiments, persistence.
"""

from . import chain, harness, minilang, model, rules, stats, tasks, watermark
from .errors import WmLabError

__all__ = ["chain", "harness", "minilang", "model", "rules", "stats", "tasks",
           "watermark", "WmLabError"]

__version__ = "0.1.0"
