"""Nested copies of the diamond: the two particle numbers drift apart.

Level k has 6^k sites. The optimal symmetric plan mixes two configurations
whose sizes differ by 2^k.
"""

import warnings

from gcot.halffill import ScaleWarning, multiscale_support

for k, scales in ((1, None), (2, [40.0]), (3, None)):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ScaleWarning)
        res = multiscale_support(k, scales)
    note = " (scales below the proven regime)" if caught else ""
    print(f"k={k}: particle numbers {res.n_minus} and {res.n_plus}{note}")
