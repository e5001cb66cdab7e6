"""Desk-scale simulator for in-body bionanosensor localization.

Sub-THz backscatter link budgets through layered tissue, bionanosensor
motion through a simplified cardiovascular graph, IMU dead reckoning with
Kalman fusion and anchor resets, and anomaly-localization evaluation.
"""

__version__ = "0.1.0"
