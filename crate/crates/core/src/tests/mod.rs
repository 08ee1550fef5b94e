//! Cross-module tests: golden files, pipeline checks and property tests.
