"""Domain models, errors and the per-run pricing session"""
