"""Lusin toolkit: one-point compactification metrics and stratification of c-Lusin images."""
