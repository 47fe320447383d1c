"""Kinematic time-series anomaly detection for tracked 2-D skeletons.

Per-person gait features (stride, feet displacement, neck displacement) are
turned into sliding windows and modelled with a masked autoregressive flow
trained on normal motion only.  Frames are scored by the minimum log-density
across everyone present, so a single anomalous person lowers the frame score.
"""

__version__ = "0.1.0"
