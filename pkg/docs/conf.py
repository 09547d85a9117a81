"""
Configuration file for the Sphinx documentation builder.

For a full list see the documentation: http://www.sphinx-doc.org/en/master/config
"""

# -- Path setup ----------------------------------------------------------------
import os
import sys

sys.path.insert(0, os.path.abspath(".."))

import regime_insurance  # noqa: E402

# -- Project information -------------------------------------------------------
project = "regime-insurance"
copyright = "2024, regime-insurance developers"
author = "regime-insurance developers"
release = regime_insurance.__version__

# -- General configuration -----------------------------------------------------
extensions = ["sphinx.ext.mathjax", "regime_insurance", "sphinx_design"]

# -- Options for HTML output ---------------------------------------------------
html_theme = "sphinx_book_theme"
html_title = "regime-insurance"
html_theme_options = {
    "use_fullscreen_button": False,
}

# -- Options for LaTeX output --------------------------------------------------
latex_engine = "xelatex"

# -- regime-insurance options --------------------------------------------------
regime_insurance_config_dir = "models"
regime_insurance_precision = 6
