"""Optimizers, truncated backpropagation and the training loops."""
from .optim import Adadelta, Adam, clip_grad_norm, make_optimizer
from .plan import AsrTraining, FinetunePlan, OptimizerSettings, SeparatorTraining
from .tbptt import ChunkPlan, plan_chunk, tbptt_forward
from .loops import (JointOptimizers, MemoryProbe, StepResult, asr_dev_counts, finetune, finetune_step,
                    load_training_state, pretrain_asr, pretrain_separator, save_training_state,
                    separator_dev_metrics)
