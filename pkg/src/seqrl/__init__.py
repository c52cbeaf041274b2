"""Actor-critic agents whose policies are regularized toward compressible action sequences."""

__version__ = "0.1.0"
