"""Deep Dyna-Q room evacuation from a 20x7 fisheye camera view.

Modules: ``world`` (room geometry, collisions, resets), ``camera`` (raycast
renderer), ``qnet`` (numpy DQN, Adam, checkpoints), ``replay`` (FIFO memory),
``trainer`` (training loop, evaluation), ``tabular`` (gridworld oracle),
``config``, ``plotting`` and ``cli``.
"""

__version__ = "0.1.0"
