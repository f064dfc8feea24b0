"""Ensemble Kalman-Bucy filter laboratory."""
