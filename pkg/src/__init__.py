"""Consistency-distilled mel decoder for singing voice conversion."""
