from setuptools import setup, find_packages

setup(
    name="NonStationary_Dueling_Bandits",
    version="1.0",
    python_requires=">=3.10",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    package_data={"cli": ["experiment.schema.json"]},
    install_requires=["numpy>=1.22", "scipy>=1.8", "jsonschema>=4.0"],
    extras_require={"test": ["pytest>=7"]},
    entry_points={"console_scripts": ["anaconda-duel = cli.commands:main"]}
)
