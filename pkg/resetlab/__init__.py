"""resetlab - reset-free reinforcement learning laboratory"""

__version__ = "0.1.0"
