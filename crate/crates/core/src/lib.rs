//! Generative conversational networks: a language-model generator trained
//! with reinforcement learning to produce labeled training data for
//! conversational NLU learners.

pub mod corpus;
pub mod creativity;
pub mod curriculum;
pub mod datamodel;
pub mod generator;
pub mod learner;
pub mod metaloop;
pub mod nn;
pub mod reward;
pub mod wireformat;
