import os
from typing import Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

StrPath = Union[str, os.PathLike[str]]

FloatArray = npt.NDArray[np.float64]
IndexArray = npt.NDArray[np.int64]
Shape = Tuple[int, int]

# anything np.random.default_rng() accepts as a seed
SeedLike = Union[None, int, Sequence[int], np.random.SeedSequence]
