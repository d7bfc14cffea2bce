"""Desk-scale probes: a numpy tensor attention classifier, its gradients and training loop."""
