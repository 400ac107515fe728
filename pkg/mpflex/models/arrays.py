# mpflex/models/arrays.py
from typing import Annotated

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, PlainSerializer


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_vector(value) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.ndim == 0:
        array = array.reshape(1)
    if array.ndim != 1:
        raise ValueError(f"expected a 1-D array, got shape {array.shape}")
    return _frozen(array)


def _as_matrix(value) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.ndim == 1 and array.size == 0:
        array = array.reshape(0, 0)
    if array.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {array.shape}")
    return _frozen(array)


def _to_list(array: np.ndarray) -> list:
    return array.tolist()


Vector = Annotated[np.ndarray, BeforeValidator(_as_vector), PlainSerializer(_to_list, return_type=list)]
Matrix = Annotated[np.ndarray, BeforeValidator(_as_matrix), PlainSerializer(_to_list, return_type=list)]


class NumericModel(BaseModel):
    """Immutable model holding read-only numpy arrays."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
