//! Static quality assurance for TOSCA blueprints packaged as CSARs together
//! with the Ansible playbooks that implement them.

pub mod catalog;
pub mod csar;
pub mod finding;
pub mod fix;
pub mod ir;
pub mod perf;
pub mod petri;
pub mod pipeline;
pub mod smells;
pub mod span;
pub mod verifier;
pub mod yaml;
