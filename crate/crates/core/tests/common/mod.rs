#![allow(dead_code)]

pub mod permutations;
pub mod toy;
