import os
import setuptools

with open(os.path.join('trapwalk', '__init__.py')) as f:
    global VERSION
    import re

    for line in f.read().split('\n'):
        vers = re.search(r'^VERSION\s+=\s+.(\d+\.\d+\.\d+)', line)
        if vers:
            VERSION = vers.groups()[0]
    if not VERSION:

        class SetupError(Exception):
            pass

        raise SetupError('Error parsing package version')

setuptools.setup(
    name='trapwalk',
    version=VERSION,
    description='Coherent exciton trapping on disordered long-range networks',
    long_description="""Coherent exciton trapping on disordered networks

This package (and command-line application) computes how long a coherent
excitation survives on a random three-dimensional network of nodes coupled by
long-range interactions, with one node acting as a trap. It averages the
survival probability over ensembles of random node configurations, fits the
power laws of its decay and relates them to the density of the decay rates.""",
    long_description_content_type='text/markdown',
    author='The trapwalk developers',
    packages=['trapwalk'],
    install_requires=['numpy>=1.17', 'scipy>=1.4'],
    python_requires='>=3.7',
    entry_points={'console_scripts': ['trapwalk = trapwalk.__main__:main']},
    license='LGPL3.0',
)
