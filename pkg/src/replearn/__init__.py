"""
replearn - representation learning for low-rank MDPs (online UCB, offline LCB)
"""

__version__ = "0.1.0"
