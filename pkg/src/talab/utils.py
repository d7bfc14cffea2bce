"""Shared runtime checks used across talab modules.

Public entry points validate their arguments with ``type_check`` before doing
any arithmetic, so misuse surfaces as ``TypeError`` at the boundary instead of
deep inside a fold.
"""

from types import UnionType
from typing import Any, TypeVar, Union, get_args, get_origin

T = TypeVar("T")


def _type_name(expected: object) -> str:
    return getattr(expected, "__name__", str(expected))


def type_check(value: Any, expected_type: Any, param_name: str = "value") -> bool:
    """Check ``value`` against a runtime type description.

    Supports plain classes, ``None``, unions (``int | None``) and the generic
    containers ``list[X]``, ``tuple[X, ...]`` and ``dict[K, V]``. Anything
    else (protocols, type variables) is accepted.

    Args:
        value: The value to check
        expected_type: The expected type
        param_name: Name of the parameter for error messages

    Returns:
        True when the value matches

    Raises:
        TypeError: If the value does not match
    """
    if expected_type is None or expected_type is type(None):
        if value is not None:
            raise TypeError(f"{param_name}: expected None, got {type(value).__name__}")
        return True

    origin = get_origin(expected_type)
    if origin is None:
        if isinstance(expected_type, type):
            # bool is an int subclass; an int parameter must not accept True
            if expected_type is int and isinstance(value, bool):
                raise TypeError(f"{param_name}: expected int, got bool")
            if not isinstance(value, expected_type):
                raise TypeError(
                    f"{param_name}: expected {expected_type.__name__}, "
                    f"got {type(value).__name__}"
                )
        return True

    args = get_args(expected_type)
    if origin is Union or origin is UnionType:
        for member in args:
            try:
                return type_check(value, member, param_name)
            except TypeError:
                continue
        names = [_type_name(member) for member in args]
        raise TypeError(
            f"{param_name}: expected one of {names}, got {type(value).__name__}"
        )

    if origin in (list, tuple):
        if not isinstance(value, origin):
            raise TypeError(
                f"{param_name}: expected {origin.__name__}, got {type(value).__name__}"
            )
        if origin is tuple and args and args[-1] is not Ellipsis:
            if len(args) != len(value):
                raise TypeError(
                    f"{param_name}: expected {len(args)}-tuple, got length {len(value)}"
                )
            for index, (item, item_type) in enumerate(zip(value, args, strict=True)):
                type_check(item, item_type, f"{param_name}[{index}]")
        elif args:
            for index, item in enumerate(value):
                type_check(item, args[0], f"{param_name}[{index}]")
        return True

    if origin is dict:
        if not isinstance(value, dict):
            raise TypeError(f"{param_name}: expected dict, got {type(value).__name__}")
        if len(args) == 2:
            for key, item in value.items():
                type_check(key, args[0], f"{param_name}.key")
                type_check(item, args[1], f"{param_name}[{key}]")
        return True

    return True


def check_return(value: T, expected_type: Any, function_name: str = "function") -> T:
    """Check a return value and pass it through.

    Args:
        value: The value to check and return
        expected_type: The expected type of the value
        function_name: Name of the function for error messages

    Returns:
        The original value

    Raises:
        TypeError: If the value does not match the expected type
    """
    type_check(value, expected_type, f"{function_name} return value")
    return value
