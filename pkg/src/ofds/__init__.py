"""Object-focused data selection under annotation-unit budgets.

The package selects which images of an unlabeled pool to send to human
annotators so that every target class is semantically covered, given
object proposals with feature vectors from an open-world detector.
"""

__version__ = "0.1.0"

from ofds.data import ClassTable, GroundTruthObject, ImageRecord, ObjectProposal, ProposalDataset
from ofds.engine import BudgetSpec, SelectionManifest, select
from ofds.errors import DatasetError, InfeasibleError

__all__ = [
    "BudgetSpec",
    "ClassTable",
    "DatasetError",
    "GroundTruthObject",
    "ImageRecord",
    "InfeasibleError",
    "ObjectProposal",
    "ProposalDataset",
    "SelectionManifest",
    "select",
]
