"""Quantum privacy amplification (QPA) for quantum secure direct communication.

Subpackages:

- ``quantum_core``: one- and two-qubit pure states, gates, measurement.
- ``qpa_engine``: the CNOT-H-CNOT condensation step, output tables, cascades.
- ``protocol_sim``: the four-step direct-communication protocol and the
  leakage Monte Carlo.
- ``cli``: command-line front end (``qsdc-qpa``).
"""

__version__ = "0.1.0"
