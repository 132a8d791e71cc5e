//! Generative neural annealer: a temperature-conditioned autoregressive
//! transformer trained to sample the Boltzmann distribution of a black-box
//! objective over bit strings, with the benchmark problems, a simulated
//! annealing baseline and attention introspection.
//!
//! The model and training code are generic over the [`nn::Scalar`] float
//! type; the aliases below fix it.

pub mod analysis;
pub mod baselines;
pub mod bits;
pub mod model;
pub mod nn;
pub mod problems;
pub mod training;

pub use bits::BitString;

pub type Model = model::GnaModel<f64>;
pub type Model32 = model::GnaModel<f32>;
pub type Tensor = nn::Tensor<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type Learner = training::Learner<f64>;
pub type Learner32 = training::Learner<f32>;
