from .client import BackendConfig, BackendError, ChatClient, ChatReply, ResultCache
from .costs import CostSummary, account_costs, finetune_cost
from .finetune import (FinetuneRecord, FinetuneValidationError, TrainingExample, export_finetune_dataset,
                       validate_finetune_file)
from .generate import EmptyGenerationError, classify_icon, clean_alt_text, generate_alt_text
from .prompts import (BUILTIN, ImagePart, MissingIconLabelError, PromptPayload, PromptTemplates, build_prompt,
                      render_context)

__all__ = [
    "BUILTIN", "BackendConfig", "BackendError", "ChatClient", "ChatReply", "CostSummary", "EmptyGenerationError",
    "FinetuneRecord", "FinetuneValidationError", "ImagePart", "MissingIconLabelError", "PromptPayload",
    "PromptTemplates", "ResultCache", "TrainingExample", "account_costs", "build_prompt", "classify_icon",
    "clean_alt_text", "export_finetune_dataset", "finetune_cost", "generate_alt_text", "render_context",
    "validate_finetune_file",
]
