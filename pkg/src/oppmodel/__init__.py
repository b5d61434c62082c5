"""Opponent-modeling market simulations: sealed-bid auctions and LOB archetype classification."""

__version__ = "0.1.0"
