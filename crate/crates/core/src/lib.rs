pub mod classification;
pub mod data;
pub mod error;
pub mod experiment;
pub mod factorization;
pub mod io;
pub mod nnls;
pub mod seed;
pub mod tensor;
pub mod tfa;
pub mod tucker;
