"""CAN-bus intrusion detection toolkit.

Log ingestion and synthetic traffic, window featurization, a VAE latent
space, teacher/student knowledge distillation, Shapley-value explanations,
metric evaluation, and a deadline-checked socket scorer.
"""

__version__ = "0.1.0"
