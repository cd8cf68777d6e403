"""
This script is used to configure the setup of the amdslab package.
"""

import codecs
import os
from setuptools import setup, find_packages

here = os.path.abspath(os.path.dirname(__file__))

with codecs.open(os.path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = '\n' + f.read()

VERSION = '0.1.0'
DESCRIPTION = 'Attack-aware multi-signal defense lab for network intrusion detection ensembles'

setup(
    name='amdslab',
    version=VERSION,
    description=DESCRIPTION,
    packages=find_packages(exclude=['tests', 'examples', 'examples.*']),
    long_description=long_description,
    classifiers = [
        "Intended Audience :: Developers",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering",
        "Topic :: Security",
    ],
    install_requires=[
        'joblib==1.4.2',
        'matplotlib==3.9.2',
        'numpy==2.0.1',
        'pandas==2.2.2',
        'PyYAML==6.0.1',
        'scikit_learn==1.5.1',
        'scipy==1.14.0',
        'seaborn==0.13.2',
        'setuptools==70.2.0',
    ],
    extras_require={
        'dev': ['pytest','black'],
    },
    entry_points={
        'console_scripts': ['amdslab=amdslab.cli:main'],
    },
    python_requires='>=3.10',
)
