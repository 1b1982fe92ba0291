//! Intersection-crossing workbench: a lightweight traffic simulator, a
//! from-scratch convolutional Q-network, a DQN trainer and the knowledge
//! transfer experiments built on top of them.

pub mod agent;
pub mod encoder;
pub mod geometry;
pub mod harness;
pub mod nn;
pub mod sim;
