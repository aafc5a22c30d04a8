pub mod analysis;
pub mod benchmarks;
pub mod cli;
pub mod configspace;
pub mod optimizers;
pub mod runner;
pub mod seeding;
