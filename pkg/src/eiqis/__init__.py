"""Desk-scale camera-to-fog-to-cloud surveillance pipeline.

Edge agents turn simulated camera frames into key/value feature records,
ship them over a tamper-evident channel to a fog node that contextualizes
and inverted-indexes them, and an operator queries the live index through
an access-checked protocol. A cloud tier builds hourly profiles and scores
live aggregates against them.
"""

__version__ = "0.1.0"
