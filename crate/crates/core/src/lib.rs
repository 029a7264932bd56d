pub mod cli;
pub mod engine;
pub mod protocol;
pub mod protofile;
pub mod statevec;
pub mod trials;
