"""Energy disaggregation toolkit: a small autodiff engine, recurrent and
convolutional disaggregators, drift-triggered adaptation and a
Bayesian hyper-parameter tuner."""

__version__ = "0.1.0"
