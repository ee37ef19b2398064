from typing import Dict, Optional, Any

import numpy as np

from decaf.errors import DecafError

DICT_READERS = None
""" contains all dictionary readers (class -> reader) """

DICT_WRITERS = None
""" contains all dictionary writers (class -> writer) """


def get_dict_readers() -> Dict:
    """
    Returns the registered readers.

    :return: the readers
    :rtype: dict
    """
    global DICT_READERS
    if DICT_READERS is None:
        DICT_READERS = dict()
        DICT_READERS[np.ndarray] = matrix_from_dict
    return DICT_READERS


def add_dict_reader(cls, reader):
    """
    Adds a reader for the specified class.

    :param cls: the class to add the reader for
    :type cls: object
    :param reader: the reader method to add
    :type reader: object
    """
    get_dict_readers()[cls] = reader


def has_dict_reader(cls) -> bool:
    return cls in get_dict_readers()


def get_dict_reader(cls) -> Optional:
    """
    Returns the reader registered for the class.

    :param cls: the class to get the reader for
    :type cls: object
    :return: the reader method, None if none registered
    :rtype: object
    """
    if has_dict_reader(cls):
        return get_dict_readers()[cls]
    else:
        return None


def get_dict_writers() -> Dict:
    """
    Returns the registered writers.

    :return: the writers
    :rtype: dict
    """
    global DICT_WRITERS
    if DICT_WRITERS is None:
        DICT_WRITERS = dict()
        DICT_WRITERS[np.ndarray] = matrix_to_dict
    return DICT_WRITERS


def add_dict_writer(cls, writer):
    """
    Adds a writer for the specified class.

    :param cls: the class to add the writer for
    :type cls: object
    :param writer: the writer method to add
    :type writer: object
    """
    get_dict_writers()[cls] = writer


def has_dict_writer(cls) -> bool:
    return cls in get_dict_writers()


def get_dict_writer(cls) -> Optional:
    """
    Returns the writer registered for the class.

    :param cls: the class to get the writer for
    :type cls: object
    :return: the writer method, None if none registered
    :rtype: object
    """
    if has_dict_writer(cls):
        return get_dict_writers()[cls]
    else:
        return None


def to_dict(obj: Any) -> Dict:
    """
    Turns the object into a dictionary using the writer registered for its class.

    :param obj: the object to convert
    :return: the dictionary
    :rtype: dict
    """
    writer = get_dict_writer(type(obj))
    if writer is None:
        raise DecafError("No dictionary writer registered for: %s" % type(obj).__name__)
    return writer(obj)


def from_dict(cls, d: Dict) -> Any:
    """
    Restores an object of the class from the dictionary.

    :param cls: the class to restore
    :param d: the dictionary
    :type d: dict
    :return: the object
    """
    reader = get_dict_reader(cls)
    if reader is None:
        raise DecafError("No dictionary reader registered for: %s" % cls.__name__)
    return reader(d)


def matrix_to_dict(m: np.ndarray) -> Dict:
    """
    Stores shape and row-major values; JSON floats round-trip float64 exactly.
    """
    return {"shape": list(m.shape), "values": np.asarray(m, dtype=np.float64).ravel().tolist()}


def matrix_from_dict(d: Dict) -> np.ndarray:
    if ("shape" not in d) or ("values" not in d):
        raise DecafError("Matrix needs 'shape' and 'values'")
    values = np.array(d["values"], dtype=np.float64)
    shape = tuple(int(s) for s in d["shape"])
    if values.size != int(np.prod(shape)):
        raise DecafError("Matrix has %d values for shape %s" % (values.size, str(shape)))
    return values.reshape(shape)
