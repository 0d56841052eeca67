"""Scene-character recognition with a bag of features coded by stacked sparse auto-encoders.

Pipeline: dense SIFT descriptors (:mod:`.dsift`) are encoded by a stacked,
optionally fine-tuned sparse auto-encoder (:mod:`.sae`, :mod:`.deepnet`),
max-pooled over a spatial pyramid (:mod:`.pooling`) and classified with a
one-vs-rest linear SVM (:mod:`.classify`). :mod:`.bench` drives it end to end.
"""

__version__ = "0.1.0"
