# -*- coding: utf-8 -*-
#
# Sphinx configuration for the django-mobility-synth documentation.

import os
import sys

# autodoc imports the package from the repository root
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import django  # noqa: E402
from django.conf import settings  # noqa: E402

settings.configure(INSTALLED_APPS=['mobility_synth'])
django.setup()

import mobility_synth  # noqa: E402

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode']
autodoc_member_order = 'bysource'

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'
exclude_patterns = ['_build']

project = u'Mobility Synth'
copyright = u'2024, The mobility-synth developers'
version = release = mobility_synth.__version__

pygments_style = 'sphinx'
html_theme = 'default'
html_static_path = ['_static']
htmlhelp_basename = 'django-mobility-synthdoc'

latex_documents = [
    ('index', 'django-mobility-synth.tex', u'Mobility Synth Documentation',
     u'The mobility-synth developers', 'manual'),
]
man_pages = [
    ('index', 'django-mobility-synth', u'Mobility Synth Documentation',
     [u'The mobility-synth developers'], 1),
]
