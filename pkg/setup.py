from setuptools import find_packages, setup

setup(
    name='xchem',
    version='0.1.0',
    description='Physics-vetted descriptor selection by two chat agents, fused into a SchNet property model',
    packages=find_packages(exclude=['tests', 'tests.*']),
    include_package_data=True,
    package_data={'xchem': ['config/*.yaml']},
    python_requires='>=3.8',
    install_requires=[
        "flask",
        "gunicorn",
        "numpy",
        "pandas",
        "schema",
        "prometheus_client",
        "requests",
        "tenacity",
        "torch",
        "matplotlib",
        "PyYAML",
        "tqdm",
    ],
    extras_require={
        'clip': ["transformers"],
    },
    entry_points={
        'console_scripts': ['xchem = xchem.cli:main'],
    },
)
