//! Scheduling engine for time-aware shaped (IEEE 802.1Qbv) networks.
//!
//! * [`model`]: topology, flows, datapaths and time arithmetic
//! * [`gcl`]: gate control lists and best-effort gaps
//! * [`scheduler`]: exact offline no-wait scheduler and constraint verifier
//! * [`sim`]: discrete-event simulation of gate-controlled forwarding
//! * [`nn`]: dense networks with hand-written gradients and ADAM
//! * [`gcn`]: graph convolutional state encoder
//! * [`td3`]: twin delayed deterministic policy gradient agent
//! * [`env`]: admission environment for dynamically arriving flows
//! * [`harness`]: experiment configuration and the command implementations

pub mod env;
pub mod gcl;
pub mod gcn;
pub mod harness;
pub mod model;
pub mod scheduler;
pub mod nn;
pub mod sim;
pub mod td3;
