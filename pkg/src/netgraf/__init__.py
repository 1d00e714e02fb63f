"""netgraf: one daemon that scrapes heterogeneous monitoring tools into a
single embedded time-series store and serves them through one query API."""

__version__ = "0.1.0"
