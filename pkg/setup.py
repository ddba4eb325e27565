from setuptools import setup

setup(
    name="pyScenarioCoverage",
    version="0.1",
    packages=["pyScenarioCoverage"],
    license="",
    author="pyScenarioCoverage contributors",
    description="Scenario coverage, specification penetration rate and formal safety verification of driving policies.",
    python_requires=">=3.10",
    install_requires=["numpy", "crccheck", "lark", "pyyaml"],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["scenario-coverage=pyScenarioCoverage.cli:main"]},
)
