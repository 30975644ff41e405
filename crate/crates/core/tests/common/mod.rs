#![allow(dead_code)]

pub mod blocks;
pub mod ops;
pub mod oracles;
pub mod suites;
