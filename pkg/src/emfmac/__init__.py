"""EMF-aware downlink MAC scheduling toolkit.

Core library (emf, budget, waterfill, mcs, scheduler, sim), a FastAPI
service wrapping it, and a CLI thin client for sweeps and reports.
"""

__version__ = "0.1.0"
