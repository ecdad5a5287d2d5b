"""Real-time planar suture-thread simulation.

Node velocities are filtered through a sparse quadratic program whose
constraints encode obstacle clearance (barrier rows), inter-node connectivity
(barrier rows with slack) and shape memory (Lyapunov rows with slack).
"""

__version__ = "0.1.0"
