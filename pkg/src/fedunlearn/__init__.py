"""fedunlearn: federated-learning simulation with client erasure.

Trains a global model with FedAvg across simulated clients, then erases
one client's contribution by constrained loss maximization (projected
gradient ascent inside an l2 ball around a reference model), evaluated
with backdoor triggers against a retrain-from-scratch baseline.
"""

__version__ = "0.1.0"
