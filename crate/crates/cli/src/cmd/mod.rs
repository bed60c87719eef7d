pub mod canon;
pub mod curate;
pub mod divergence;
pub mod enumerate;
pub mod generate;
pub mod senses;
pub mod train_lm;
