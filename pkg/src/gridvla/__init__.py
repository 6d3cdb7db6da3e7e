"""Gridworld lab for modality-conditioned action policies.

A deterministic manipulation gridworld with a scripted solver, a word-level
codec for scenes/prompts/thoughts/actions, a tiny numpy transformer trained
under a modality-mixture objective, an evaluation harness, and an HTTP
steering service.
"""

__version__ = "0.1.0"
