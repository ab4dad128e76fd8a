pub mod agents;
pub mod engine;
pub mod lane;
pub mod ledger;
pub mod network;
pub mod pricing;
pub mod rng;
