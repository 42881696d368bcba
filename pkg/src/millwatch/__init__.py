"""Real-time anomaly detection for rolling-mill camera streams, with a scenario-driven simulator."""

__version__ = "0.1.0"
