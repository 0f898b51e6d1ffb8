"""Active-learning benchmark harness for raw-audio event classifiers.

Three acquisition/training strategies over a shared pool protocol:

* ``dafl``      - BADGE acquisition, the conv-net feature extractor is
                  fine-tuned after every annotation round.
* ``dicl``      - random acquisition with the same fine-tuning loop.
* ``dal-*``     - BADGE acquisition over frozen deep features feeding a
                  classical classifier (ridge / logistic / k-NN).

Supporting machinery: a from-scratch 1-D conv net (exact backprop, SGD
with momentum, freeze policies), synthetic dataset generation, bootstrap
confidence intervals, Friedman / Wilcoxon / Holm significance tests, and
a sliding-window detection pipeline for long recordings.
"""

__version__ = "0.1.0"
