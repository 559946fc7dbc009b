import math

import numpy as np


def orientation_error(q_d, q_c) -> float:
    """Quaternion orientation error on [0, 100]; invariant to quaternion sign."""
    q_d = np.asarray(q_d, dtype=float)
    q_c = np.asarray(q_c, dtype=float)
    diff = float(np.linalg.norm(q_d - q_c))
    summ = float(np.linalg.norm(q_d + q_c))
    return 100.0 * min(diff, summ) / math.sqrt(2.0)
