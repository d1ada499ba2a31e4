from .ablation import AblationCell, AblationGrid, run_ablation_suite
from .cider import CiderConfig, cider, document_frequency
from .report import EmptyEvaluationError, MetricReport, evaluate, read_eval_records, write_eval_records
from .scores import (MeteorConfig, align, bleu_n, lcs_length, load_synonyms, meteor_lite, rouge_l, stem,
                     tokenize)

__all__ = [
    "AblationCell", "AblationGrid", "CiderConfig", "EmptyEvaluationError", "MeteorConfig", "MetricReport",
    "align", "bleu_n", "cider", "document_frequency", "evaluate", "lcs_length", "load_synonyms", "meteor_lite",
    "read_eval_records", "rouge_l", "run_ablation_suite", "stem", "tokenize", "write_eval_records",
]
