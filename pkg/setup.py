from setuptools import find_packages, setup


# Find all packages
PACKAGES = find_packages(exclude=['examples', 'examples.*'])

setup(name='fpsim',
      version=open('VERSION').read().strip(),
      description='Deterministic testbed for model poisoning in federated '
                  'learning',
      long_description=open('README.md').read(),
      license='MIT',
      packages=PACKAGES,
      data_files=[('', ['VERSION'])],
      install_requires=['numpy>=1.17', 'scipy>=1.4', 'PyYAML>=5.1'],
      extras_require={'tests': ['pytest', 'pytest-mock']},
      entry_points={'console_scripts': ['fpsim = fpsim.cli:main']},
      )
