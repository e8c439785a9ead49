from src.aptlab.prompts.additive import (
    PromptSet,
    WarmStart,
    apply_additive,
    apply_input_level,
    init_prompts,
    load_prompts,
    ppf_fuse,
    save_prompts,
    stored_mode,
    tag_mode,
)
from src.aptlab.prompts.concat import ConcatPromptSet, vpt_concat_forward
from src.aptlab.prompts.pool import PromptPool, pool_forward, pool_select, rank_keys

__all__ = [
    "ConcatPromptSet", "PromptPool", "PromptSet", "WarmStart", "apply_additive",
    "apply_input_level", "init_prompts", "load_prompts", "pool_forward", "pool_select",
    "ppf_fuse", "rank_keys", "save_prompts", "stored_mode", "tag_mode", "vpt_concat_forward",
]
