"""Per-call energy profiler for deep-learning scripts.

Statically instruments framework API calls with measurement
breakpoints, gates execution on machine stability, samples
per-component power at a fixed interval, and computes net energy and
its statistical relationships.
"""

__version__ = "0.1.0"
