"""DCEA composite-attestation simulator.

Desk-scale model of a protocol that binds confidential-VM attestation
reports to platform TPM quotes, plus the adversarial harness that shows
which verifier check defeats which attack class.
"""

__version__ = "0.1.0"
