pub mod domain;
pub mod error;
pub mod hyper;
pub mod kernels;
pub mod linalg;
pub mod posterior;
pub mod quadrature;
pub mod testbeds;
pub mod studies;
