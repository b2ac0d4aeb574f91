//! Generators and reference oracles shared by the deployqa test suites.

pub mod corpus;
pub mod nets;
pub mod ols;
pub mod topo;
