"""Neutrino event classification from dual-view LArTPC pixel maps."""

__version__ = "0.1.0"
