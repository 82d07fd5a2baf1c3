"""Headless digital-twin traffic co-simulation kernel.

Road-network modeling with procedural generation, a closed-form virtual
driver, traffic-signal control with lost-time analytics, a frame-locked
co-simulation wire protocol with scenario record/replay, camera-to-world
georegistration, and a V2X security layer.
"""

__version__ = "0.1.0"

PROTOCOL_VERSION = "1.0"
