import logging
from unittest import mock

import pytest

from msa.utils import (
    THREADS_ENV,
    ConfigurationError,
    FormatError,
    ResourceError,
    TqdmHandler,
    TruncationError,
    UsageError,
    get_version,
    safe_filename,
    thread_limit,
)


def test_safe_filename():
    assert safe_filename("run 1/a:b.msf") == "run_1_a_b.msf"
    assert safe_filename("taylor-green_64") == "taylor-green_64"


@pytest.mark.parametrize("value, expected", [("4", 4), ("1", 1), ("", None)])
def test_thread_limit(value, expected):
    with mock.patch.dict("os.environ", {THREADS_ENV: value}):
        assert thread_limit() == expected


def test_thread_limit_unset():
    with mock.patch.dict("os.environ", {}, clear=True):
        assert thread_limit() is None


@pytest.mark.parametrize("value", ["0", "-2", "many", "1.5"])
def test_thread_limit_invalid(value):
    with mock.patch.dict("os.environ", {THREADS_ENV: value}):
        with pytest.raises(ConfigurationError, match="positive integer"):
            thread_limit()


def test_errors_refine_builtins():
    assert issubclass(TruncationError, FormatError)
    assert issubclass(FormatError, ValueError)
    assert issubclass(UsageError, ValueError)
    assert issubclass(ResourceError, RuntimeError)


def test_tqdm_handler_writes_through_tqdm():
    handler = TqdmHandler()
    record = logging.LogRecord("msa", logging.INFO, __file__, 1, "ladder done", None, None)
    with mock.patch("tqdm.tqdm.write") as write:
        handler.emit(record)
    write.assert_called_once_with("ladder done")


def test_get_version():
    assert isinstance(get_version(), str)
