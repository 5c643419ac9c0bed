pub mod ir;
pub mod alias;
pub mod callgraph;
pub mod class_analysis;
pub mod hssa;
pub mod rules;
pub mod pipeline;
pub mod taint;
pub mod ranking;
pub mod privilege;
pub mod cli;
pub mod testkit;
