"""Test suite for epipolar-mvd."""
