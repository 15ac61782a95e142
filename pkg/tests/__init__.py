""" Tests for the plugin.

Pure computational tests (test_utils_*) need no AiiDA profile; tests of the
data types, process functions, workflow and command line request the
``aiida_profile_clean`` fixture.
"""
import os

TEST_DIR = os.path.dirname(os.path.realpath(__file__))
INPUT_DIR = os.path.join(TEST_DIR, "input_files")
