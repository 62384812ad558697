"""Online correction recovery: append-only retrieval substrate and benchmark harness."""

from ._core import (
    BruteForceIndex,
    HnswIndex,
    Substrate,
    generate_synthetic,
    load_embedding_file,
    recall_at_k,
    run_scale_study,
    run_sweep,
    save_embedding_file,
    verify_ledger_file,
)

__all__ = [
    "BruteForceIndex",
    "HnswIndex",
    "Substrate",
    "generate_synthetic",
    "load_embedding_file",
    "recall_at_k",
    "run_scale_study",
    "run_sweep",
    "save_embedding_file",
    "verify_ledger_file",
]
