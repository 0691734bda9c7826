"""Lidar perception and driver characterization toolkit.

Point clouds are rasterized into bird's-eye-view maps, vehicles are detected
around the full azimuth and tracked over time, and the ego driver's
car-following behaviour is characterized by IDM parameters estimated over
sliding windows and correlated with a physiological signal.
"""

__version__ = "0.1.0"
