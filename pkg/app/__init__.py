"""Multi-robot dynamic coverage path planning simulator."""
