from setuptools import setup
import os

long_description = ""
if os.path.exists('README.md'):
    with open('README.md', 'r', encoding='utf-8') as f:
        long_description = f.read()

setup(
    name='weakri',
    version='1.0.0',
    description='weakri: weak-measurement simulation and estimation of the relativistic independence bound',
    long_description=long_description,
    py_modules=[
        'weakri',
        'weakri_qcore',
        'weakri_theory',
        'weakri_wmsim',
        'weakri_tensor_io',
        'weakri_estimation',
        'weakri_init',
        'weakri_auto_config',
        'weakri_protocol',
        'weakri_verify',
    ],
    python_requires='>=3.8',
    install_requires=[
        'pyyaml>=6.0',
        'numpy>=1.22',
        'scipy>=1.8',
        'click>=8.1',
        'loguru>=0.6',
        'pandas>=1.5',
    ],
    extras_require={
        'test': ['pytest>=7.0'],
    },
    entry_points={
        'console_scripts': [
            'weakri=weakri:main',
        ],
    },
)
