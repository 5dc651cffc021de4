"""chainrec: computational chain-recurrence toolkit.

Subpackages cover the dyadic tiling of the open cube (-3,3)^d, phase
spaces and built-in maps, the cell-level pseudo-orbit reachability graph
and its chain classes, Conley Lyapunov functions and filtrations,
proximal-point clustering, pseudo-orbit jump regrouping, SL(2,R)
rotation perturbations, and exact rectangle-arrangement coloring.
"""

__version__ = "0.1.0"
