"""Inter-robot communication: the simulated range-limited network."""
