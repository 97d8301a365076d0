# Motion-to-language captioning with attention-derived segmentation
__version__ = "1.0.0"
