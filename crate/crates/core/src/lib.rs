pub mod cosserat;
pub mod engine;
pub mod failure;
pub mod fem;
pub mod field;
pub mod harness;
pub mod plate;
