from ._lvdfm import Error, cli, crps, dm_test, estimate, quantile, simulate, twcrps

__all__ = ["Error", "cli", "crps", "dm_test", "estimate", "quantile", "simulate", "twcrps"]
