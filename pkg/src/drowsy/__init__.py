"""Driver drowsiness detection: eye ROI preprocessing, FD-NN eye-state classifier, alarm logic."""

__version__ = "0.1.0"
