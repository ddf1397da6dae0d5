"""
Step records collected while integrating a flow.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd


TRACE_COLUMNS = ["k", "t", "h", "entropy", "error"]


@dataclass
class FlowTrace:
    """History of an integration run.

    Each accepted step appends one record ``(t, h, entropy, error)``. ``W`` holds the last state,
    ``V`` the last tangent representation when the integrator has one.
    """
    W: np.ndarray
    V: Optional[np.ndarray] = None
    records: list = field(default_factory=list)
    terminated: bool = False
    linearizations: Optional[int] = None
    states: Optional[list] = None

    def append(self, t: float, h: float, entropy: float, error: Optional[float] = None) -> None:
        if self.records and t <= self.records[-1][0]:
            raise ValueError("trace times must increase, got %r after %r" % (t, self.records[-1][0]))
        self.records.append((float(t), float(h), float(entropy), None if error is None else float(error)))

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def t(self) -> float:
        return self.records[-1][0] if self.records else 0.0

    @property
    def step_sizes(self) -> np.ndarray:
        return np.array([r[1] for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return np.array([r[0] for r in self.records])

    def to_frame(self) -> pd.DataFrame:
        """Returns the records as a frame with columns ``k, t, h, entropy, error``.

        :rtype: :class:`pandas:pandas.DataFrame`
        """
        return pd.DataFrame.from_records(
            [(k + 1,) + r for k, r in enumerate(self.records)], columns=TRACE_COLUMNS)
