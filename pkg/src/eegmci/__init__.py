"""EEG cognitive-screening pipeline: data handling, preprocessing, spectral
features, small neural classifiers, patient-level evaluation, and
reliability analysis (calibration, density overlap, feature attribution).
"""

__version__ = "0.1.0"
