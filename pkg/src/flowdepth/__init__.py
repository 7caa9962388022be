"""Violence-style video classification with a 3D CNN whose temporal kernel
depth N is the experimental variable: Lucas-Kanade flow preprocessing, a
numpy 3D CNN with manual backprop, synthetic motion data and an N-sweep
harness."""

__version__ = "0.1.0"
