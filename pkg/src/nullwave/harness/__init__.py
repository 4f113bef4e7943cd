"""Configuration, experiment drivers, persistence and the command line."""
from .config import RunConfig
from .experiments import (SweepResult, convergence_study, scatter_study, simulate, summarize,
                          sweep_lifespan)
from .persist import persist

__all__ = ["RunConfig", "SweepResult", "convergence_study", "scatter_study", "simulate",
           "summarize", "sweep_lifespan", "persist"]
