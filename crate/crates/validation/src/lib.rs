//! Holds the workspace acceptance suite (`tests/acceptance.rs`). Run it with
//! `cargo test -p amdp-validation --test acceptance`.
