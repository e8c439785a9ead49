"""aptlab: additive prompt tuning on a frozen ViT for class-incremental learning."""

__version__ = "0.1.0"
