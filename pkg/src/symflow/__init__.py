"""symflow: exact symmetry algebra for PDE residuals plus a desk-scale
spectral neural operator trained with symmetry-based loss regularizers."""

__version__ = "0.1.0"
