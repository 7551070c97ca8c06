"""Semantic scoring of open-ended responses against reference answers.

Consumes the dataset tool's eval and response files and writes a score
report in its exact report schema; there is no in-process linkage, the
contract is files only.
"""

__version__ = "0.1.0"
