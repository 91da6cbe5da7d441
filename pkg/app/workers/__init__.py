"""
Worker pool for batched polishing and random sweeps
"""
