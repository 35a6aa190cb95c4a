# Copyright (c) the ospsafdm authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

#
#   python3 setup.py develop
# or
#   pip install -e .
#
# Tests: python3 -m unittest discover -s tests -p "*_test.py"

import unittest

import setuptools


def test_suite():
    test_loader = unittest.TestLoader()
    test_suite = test_loader.discover("tests", pattern="*_test.py")
    return test_suite


setuptools.setup(
    name="ospsafdm",
    packages=["ospsafdm", "ospsafdm.core"],
    version="0.1.0",
    author="ospsafdm authors",
    python_requires=">=3.7",
    install_requires=["numpy", "scipy", "pandas", "tqdm", "gitpython>=2.1"],
    entry_points={"console_scripts": ["ospsafdm=ospsafdm.linksim:cli"]},
    test_suite="setup.test_suite",
)
