"""Single source for the package version used in code and in run manifests."""

VERSION = "0.1.0"
