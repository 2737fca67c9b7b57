__version__ = "1.0.0"

#: Major component of the tool version; stamped into every result document.
SCHEMA_VERSION = int(__version__.split(".")[0])
