"""Statistical reliability tools for AI systems: lifetime, degradation and
recurrent-event models, composite interruptive-event intensities, OOD scoring,
mixture designs and variational uncertainty quantification."""

__version__ = "0.1.0"
