"""Bundled case-study data: consumer and service models, sources, sessions."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ctxspl.fmxml import parse_feature_model
from ctxspl.model import FeatureModel


def path(name: str) -> Path:
    return Path(str(resources.files("ctxspl") / "data" / name))


def read_bytes(name: str) -> bytes:
    return path(name).read_bytes()


def cc_spl() -> FeatureModel:
    return parse_feature_model(read_bytes("cc_spl.fm.xml"))


def csc_spl() -> FeatureModel:
    return parse_feature_model(read_bytes("offers/cloudA/csc_spl.fm.xml"))
