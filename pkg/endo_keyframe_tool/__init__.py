# Endo Key-frame Tool Package
# Key-frame selection, depth-map metrics and depth-driven polyp localization for endoscopy sequences

__version__ = "1.0.0"
