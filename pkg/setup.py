"""Install the desalination plant day-ahead scheduler."""

from setuptools import setup, find_packages

setup(
    name='desal-hdp',
    version='0.1',
    packages=[f'desal.{package}' for package
              in find_packages('desal')],
    zip_safe=False,
    install_requires=[
        'arxiv-base>=0.17.4.post2',
        'flask<2.3',
        'werkzeug<2.3',
        'jinja2<3.1',
        'click>=7.0',
        'python-dateutil',
        'pyyaml>=5.1',
        'mypy_extensions>=0.4.3',
        'numpy>=1.21',
        'scipy>=1.7',
        'pandas>=1.3',
        'networkx>=2.6',
        'pyomo>=6.4',
        'highspy>=1.5'
    ],
    extras_require={
        'kmedoids': ['scikit-learn-extra>=0.2']
    },
    entry_points={
        'console_scripts': ['hdp=desal.hdp.cli:cli']
    },
    include_package_data=True
)
