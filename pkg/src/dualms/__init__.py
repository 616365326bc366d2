"""Dual-skeleton minimal surfaces: connected max-cut skeletons and a TV-regularised neural field."""
__version__ = "0.1.0"

from .domain import DesignDomain, Port, load_domain, unit_cube
from .exceptions import DualMSError
from .field import FieldModel, MinimalSurfaceField, SkeletonSamples, TrainConfig, train
from .graph import SpatialGraph, build_graph
from .maxcut import ConnectedMaxCut, Partition, brute_force, initial_partition, optimize

__all__ = ["__version__", "DesignDomain", "Port", "load_domain", "unit_cube", "DualMSError",
           "FieldModel", "MinimalSurfaceField", "SkeletonSamples", "TrainConfig", "train",
           "SpatialGraph", "build_graph", "ConnectedMaxCut", "Partition", "brute_force",
           "initial_partition", "optimize"]
