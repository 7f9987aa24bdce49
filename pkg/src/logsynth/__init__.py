"""logsynth: static analysis of logging-instrumented programs and
active generation of labeled log-sequence datasets.

The pipeline has three phases: probe the program for logging statements
and call structure, find the log-related execution paths of every method
that can produce log output, and walk those paths to emit labeled
sequences of log events with a controllable size, anomaly rate, and
component restriction.
"""

__version__ = "0.1.0"
