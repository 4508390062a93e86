"""Numerical engines: claims moments, demand, backward solver, pricing and Monte-Carlo."""
