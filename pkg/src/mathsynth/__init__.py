"""Number-independent math training data from word-problem corpora.

The pipeline masks every number in a problem, asks a model once for a generic
question plus a unified program over the masked values, verifies the program
against ground truth in a sandbox, then scales the verified template offline:
combinatorial placeholder variants for training data and number-perturbed
groups for logical-consistency evaluation.
"""

__version__ = "0.1.0"
