"""Numerical thresholds shared by validation, diagnostics and reconstruction.

Defaults live in :class:`Tolerances`. The CLI reads overrides from the
``GDQST_TOL`` environment variable, a JSON object such as
``{"condition": 1e14, "degeneracy": 1e-9}``. Library functions never read
the environment themselves; pass a ``Tolerances`` instance explicitly.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class Tolerances:
    degeneracy: float = 1e-8      # eigenvalue gap, relative to ||X||
    psd: float = 1e-9             # allowed negative eigenvalue in physicality checks
    symplectic: float = 1e-8      # ||X^T Omega X - Omega||
    determinant: float = 1e-10    # smallest normalized determinant factor
    condition: float = 1e12       # Vandermonde / eigenvector condition limit
    imaginary: float = 1e-6       # discarded imaginary part, relative to result
    purity: float = 1e-8          # ||(Gamma Omega)^2 + I||
    coupling: float = 1e-10       # inter-mode block magnitude counted as coupling
    rank: float = 1e-9            # relative singular value cutoff
    symmetry: float = 1e-9        # ||S - S^T|| relative

    def replace(self, **changes) -> "Tolerances":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_env(cls, var: str = "GDQST_TOL") -> "Tolerances":
        raw = os.environ.get(var)
        if not raw:
            return cls()
        try:
            overrides = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{var} is not valid JSON: {exc}") from None
        if not isinstance(overrides, dict):
            raise ValidationError(f"{var} must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ValidationError(f"{var}: unknown tolerance(s) {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in overrides.items()})


DEFAULT = Tolerances()
