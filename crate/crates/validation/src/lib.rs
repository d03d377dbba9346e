//! Acceptance suite for the lenspol workspace. The checks live in
//! `tests/acceptance.rs` and run with `cargo test -p lenspol-validation`.
//! This package sorts after the library and CLI packages, so a failing
//! criterion does not stop their tests from running.
