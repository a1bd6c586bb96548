pub mod costs;
pub mod eval;
pub mod experiment;
pub mod learners;
pub mod linalg;
pub mod online_pca;
pub mod regressor;
pub mod rng;
pub mod stream;
pub mod synthetic;
pub mod verify;
