"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

from .model import Variant


def ensure_dataset(obj):
    from .data import ParkingDataset

    if not isinstance(obj, ParkingDataset):
        raise TypeError(
            f"expected a ParkingDataset, got {type(obj).__name__}; build one with "
            "ParkingDataset.build(city, series, window, horizon)"
        )
    return obj


def ensure_variant(value) -> Variant:
    if isinstance(value, Variant):
        return value
    return Variant.parse(str(value))


def ensure_positive_int(name, value) -> int:
    iv = int(value)
    if iv < 1 or iv != value:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return iv


def ensure_non_negative_int(name, value) -> int:
    iv = int(value)
    if iv < 0 or iv != value:
        raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
    return iv


def ensure_positive(name, value) -> float:
    fv = float(value)
    if not fv > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return fv


def ensure_non_negative(name, value) -> float:
    fv = float(value)
    if fv < 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return fv


def ensure_unit_fraction(name, value, *, open_left=True) -> float:
    fv = float(value)
    low_ok = fv > 0.0 if open_left else fv >= 0.0
    if not (low_ok and fv <= 1.0):
        bound = "(0, 1]" if open_left else "[0, 1]"
        raise ValueError(f"{name} must be in {bound}, got {value!r}")
    return fv
