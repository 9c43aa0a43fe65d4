"""Converters from detector outputs to the ofds wire formats.

The package never imports the selection engine; it speaks to it purely
through the manifest / feature-blob / similarity-table file formats.
"""

__version__ = "0.1.0"

from ofds_extract.extract import ExtractionJob, extract, register_model, similarity_table
from ofds_extract.errors import AdapterError

__all__ = ["AdapterError", "ExtractionJob", "extract", "register_model", "similarity_table"]
