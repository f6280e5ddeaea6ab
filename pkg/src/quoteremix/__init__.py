"""Brand slogans by remixing famous quotes, plus the metrics and judges to evaluate them."""

from .edits import word_edit_count
from .gateway import ChatRequest, ChatResponse, Gateway, MockBackend, mock_script
from .judge import aggregate_novelty, hook_score, judge_binary, judge_pair, run_tournament
from .metrics import aggregate_cells, distinct2, pairwise_bleu, self_bleu, sentence_bleu
from .model import (
    Brand,
    Persona,
    Quote,
    QuoteSegmentation,
    SloganCandidate,
    SloganSet,
    normalize_words,
    validate_segmentation,
)
from .remix import build_remix_prompt, generate_cell, parse_transcript, run_remix, validate_candidate

__version__ = "0.1.0"
