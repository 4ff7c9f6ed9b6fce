from .plots import KINDS, PlotSpec, SchemaError, evrate_series, render, search_success_curve

__all__ = ["KINDS", "PlotSpec", "SchemaError", "evrate_series", "render",
           "search_success_curve"]
