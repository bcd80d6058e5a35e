pub mod bench;
pub mod common;
pub mod compare;
pub mod extract;
pub mod gap;
pub mod run;
pub mod synth_gen;
