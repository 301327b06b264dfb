"""Figure generation for label-shift estimation study outputs."""

from .plots import FigureJob, RhoBandResult, SchemaError, plot_boxplot, plot_rho_band

__version__ = "0.1.0"
