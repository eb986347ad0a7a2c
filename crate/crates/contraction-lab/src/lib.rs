pub mod numkit;
pub mod contraction;
pub mod asymptotic;
pub mod shmulyan;
pub mod harnack;
pub mod schur;
pub mod corpus;
pub mod suites;
