"""Recognition and separation metrics, dataset evaluation and run reports."""
from .metrics import (EditCounts, cer, edit_counts, edit_distance, error_rate, min_perm_counts,
                      min_perm_wer, sdr_scale_projection, wer)
from .evaluate import ExampleResult, MetricsReport, evaluate, evaluate_example, separate
from .report import format_tsv, load_run, table_rows, write_report
