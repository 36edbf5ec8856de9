# This makes tests a proper Python package
