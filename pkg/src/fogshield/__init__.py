"""fogshield: three-layer (device / fog / cloud) TCP SYN flood detection
and mitigation simulator."""

__version__ = "0.1.0"
