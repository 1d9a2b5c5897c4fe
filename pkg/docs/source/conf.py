# -*- coding: utf-8 -*-
"""deskgaze documentation build configuration file."""
import sphinx_rtd_theme
import sys
import os

# If extensions (or modules to document with autodoc) are in another
# directory, add these directories to sys.path here.
sys.path.insert(0, os.path.abspath('../../'))
import deskgaze  # noqa: E402

# -- General configuration -------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.intersphinx',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'deskgaze'
copyright = u'2026, deskgaze developers'

# The short X.Y version and the full release.
version = deskgaze.__version__
release = deskgaze.__version__

exclude_patterns = []
pygments_style = 'sphinx'

# -- Options for HTML output -----------------------------------------------

html_theme = "sphinx_rtd_theme"
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
html_static_path = []
htmlhelp_basename = 'deskgazedoc'

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
}

man_pages = [
    ('index', 'deskgaze', u'deskgaze Documentation',
     [u'deskgaze developers'], 1)
]
