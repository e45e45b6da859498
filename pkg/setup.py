# -*- coding: utf-8 -*-
#!/usr/bin/env python

import os
import sys

import mobility_synth

try:
    from setuptools import setup
except ImportError:
    from distutils.core import setup

version = mobility_synth.__version__

if sys.argv[-1] == 'publish':
    os.system('python setup.py sdist upload')
    print("You probably want to also tag the version now:")
    print("  git tag -a %s -m 'version %s'" % (version, version))
    print("  git push --tags")
    sys.exit()

readme = open('README.rst').read()
history = open('HISTORY.rst').read().replace('.. :changelog:', '')

setup(
    name='django-mobility-synth',
    version=version,
    description='Differentially private synthesis of location trajectories with hierarchical location encodings.',
    long_description=readme + '\n\n' + history,
    author='The mobility-synth developers',
    packages=[
        'mobility_synth',
        'mobility_synth.management',
        'mobility_synth.management.commands',
    ],
    include_package_data=True,
    install_requires=[
        "django>=3.2",
        "numpy>=1.22",
        "scipy>=1.8",
        "pandas>=1.4",
    ],
    entry_points={
        'console_scripts': [
            'mobility-synth = mobility_synth.cli:main',
        ],
    },
    license="GPLv2+",
    zip_safe=False,
    keywords='django-mobility-synth differential-privacy trajectories',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Framework :: Django',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: GNU General Public License v2 or later (GPLv2+)',
        'Natural Language :: English',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: GIS'
    ],
    test_suite = 'runtests.run_tests'
)
