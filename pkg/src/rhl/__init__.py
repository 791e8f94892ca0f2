"""Multilevel recurrent-event analysis."""
