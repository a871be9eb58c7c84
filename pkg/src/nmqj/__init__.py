"""Non-Markovian quantum jump simulator."""
