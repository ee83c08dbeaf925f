"""Evaluation and dataset-curation toolkit for open-vocabulary emotion recognition."""

from .errors import MerEvalError
from .extraction import Lexicon, RawResponse, Sentiment, extract_labels_lexicon, parse_label_list
from .metrics import (
    BasicInstance,
    FineGrainedInstance,
    MetricReport,
    SentimentInstance,
    acc_waf,
    dataset_mean,
    hit_rate,
    set_metrics,
)
from .taxonomy import EmotionWheel, GroupingPipeline, LemmaMap, SynonymMap, default_pipeline, normalize_label

__version__ = "0.1.0"
