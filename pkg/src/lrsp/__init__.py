# This file contains the package version
# See PEP 440 for version specifications
# https://peps.python.org/pep-0440/

__version__ = "0.1.0"
