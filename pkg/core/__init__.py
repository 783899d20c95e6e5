"""
Netgraph core - transport and diffusion on metric graphs
"""

__version__ = "1.0.0"
