"""
Coordination Package
Runs the margin removal and content rectification stages end to end.
"""

from coordination.pipeline_coordinator import DewarpCoordinator, RunReport

__all__ = ['DewarpCoordinator', 'RunReport']
