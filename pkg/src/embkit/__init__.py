"""embkit: training and evaluation workbench for word/character embeddings,
co-occurrence factorization, BMES segmentation and RCNN text classification.
"""

__version__ = "0.1.0"
