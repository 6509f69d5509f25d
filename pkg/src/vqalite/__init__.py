"""vqalite: a desk-scale visual question answering stack.

Everything runs on a small reverse-mode autodiff engine over numpy
buffers. Submodules:

  tensor      autodiff engine (Tensor, ops, backward)
  kernels     hot conv/pool kernels: compiled lane + numpy fallback
  layers      Linear, GRUCell, BatchNorm1d, Dropout, Conv2d
  text        tokenizer, vocabulary, bidirectional GRU question encoder
  vision      small trainable CNN backbone + feature normalization
  attention   glimpse attention with the -(x-y)^2 + relu(x+y) fusion
  counting    differentiable box counter with hat-encoded features
  model       fusion head, ablation modes, full VQA model, loss
  data        synthetic balanced-pair shape/question dataset
  metrics     single/pair accuracy report
  train       training loop, evaluation, checkpoint orchestration
  cli         gen-data / train / eval / ablate / gradcheck subcommands
"""

import os

# The engine is single-threaded by design; pin BLAS before numpy loads so
# runs are reproducible and honest about single-core cost.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
del os, _var

__version__ = "0.1.0"
