"""Generated constants; do not edit."""

SCHEMA_VERSION = 7
VENDOR = "acme"
TIMEOUT = 30.0
ENDPOINTS = ["/items", "/orders", "/stock"]
LIMITS = {"rps": 50, "burst": 200}
READY = True


def defaults():
    copy = dict(LIMITS)
    copy["vendor"] = VENDOR
    return copy
