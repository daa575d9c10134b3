"""imagedx: medical-image decision support.

Pipeline: labeled-image ingestion -> DenseNet-121 multiclass classification
over a 25-entry hierarchical label catalog -> prompt synthesis -> LLM-backed
diagnosis report, exposed as a library, a CLI (``imagedx``) and an HTTP
service.
"""

__version__ = "0.1.0"
