__version__ = "0.1.0"

from .plots import PlotSpec, SchemaError, plot_adaptation, plot_scaling, render
