from .checkpoint import load_checkpoint, save_checkpoint
from .config import BatchNorm, Conv, Dense, MaxPool, NetworkConfig, Softmax, desk_profile, paper_profile, PROFILES
from .network import Network, TrainSchedule, build_network

__all__ = [
    "BatchNorm", "Conv", "Dense", "MaxPool", "NetworkConfig", "Softmax", "PROFILES",
    "Network", "TrainSchedule", "build_network", "desk_profile", "paper_profile",
    "load_checkpoint", "save_checkpoint",
]
