"""
Corridor Obstacle Detection

Obstacle detection by truncating the predicted ego-corridor, with an optional
free-energy outlier fusion and a synthetic test-track evaluation protocol.
"""

__version__ = "1.0.0"
