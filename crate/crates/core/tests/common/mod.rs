//! Shared helpers for integration and acceptance tests.
#![allow(dead_code)]

pub mod gradcheck;
pub mod hindsight;
pub mod properties;
