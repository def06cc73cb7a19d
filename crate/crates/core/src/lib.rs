//! Relational transducer networks: a small Datalog dialect, a syntactic
//! monotonicity checker, a network simulator and confluence verdicts.

pub mod calmlang;
pub mod lattices;
pub mod monocheck;
pub mod netsim;
pub mod relspace;
pub mod syntax;
pub mod transducer;
pub mod verdicts;
