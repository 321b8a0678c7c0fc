#![allow(dead_code)]

pub mod quad;
pub mod sim;
