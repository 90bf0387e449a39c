"""Synthetic tourist itinerary generation toolkit.

Pipeline stages:
  0. cohort    — tourist cohort extraction and monthly ward priors from staypoints
  1. scope     — trip-scope (nights, location count) prediction
  2. routing   — ward-set assignment, route ordering, day splitting
  3. chains    — quarter-hour activity chain generation and validation

Plus population synthesis from survey marginals, evaluation metrics, and a
CLI orchestrator (``toursynth.cli``).
"""

__version__ = "0.1.0"
