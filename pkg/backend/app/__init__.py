# DTRformer: spatio-temporal traffic forecasting engine
__version__ = "1.0.0"
