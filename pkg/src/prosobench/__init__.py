"""Prosody-controllable speech synthesis workbench."""

__version__ = "0.1.0"
