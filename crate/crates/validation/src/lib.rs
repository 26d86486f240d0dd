//! End-to-end acceptance checks for `caldiff`.
//!
//! Everything lives in `tests/acceptance.rs`; run it with
//! `cargo test -p caldiff-validation --test acceptance [-- C3 C5]`.
