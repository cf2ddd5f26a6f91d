"""Pilotless transmission over Wiener phase noise with skewed MPSK.

Channel simulation, grid and Tikhonov-mixture phase demodulators, LDPC
iterative decoding and the wrong-trajectory decay analysis.
"""

from .channel import PILOTLESS, ChannelParams, FrameRecord, insert_pilots, simulate_frame
from .constellation import (
    Constellation,
    awgn_mutual_information,
    make_mpsk,
    make_skewed_mpsk,
    min_distance,
    rotational_symmetries,
)
from .decay import decay_factor, simulate_two_trajectories, steady_state_concentration
from .demod_dp import dp_forward_backward
from .demod_mixture import TikhonovMixture, mixture_demodulate, mixture_reduce
from .ldpc import ParityCheckCode, bp_decode
from .receiver import IterationSchedule, iterate_demod_decode, load_code

__version__ = "0.1.0"
