"""Saturn inner-large-moon tour design toolkit.

Halo families and invariant-manifold connections in oblate Saturn-moon
circular restricted three-body problems, plus low-thrust inter-moon
transfer design and end-to-end tour budgeting.
"""

__version__ = "0.1.0"
