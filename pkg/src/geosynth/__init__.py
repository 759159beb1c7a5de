"""Partially synthetic geocoded microdata: CART and DPMPM synthesizers,
MDAV clustering for parallel synthesis, and risk/utility evaluation."""

from .cart import CartConfig, fit_tree, srmi_synthesize, synthesize_geocode_categorical, synthesize_geocode_continuous
from .data_model import Dataset, GeoPoint, Schema, SyntheticRelease, Variable, load_csv, save_csv
from .dpmpm import DpmpmConfig
from .mdav import ClusterPartition, mdav_partition, split_dataset

__version__ = "0.1.0"
