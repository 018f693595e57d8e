//! Acceptance criteria for `spinkernel`; see `tests/acceptance.rs`.
