pub mod data;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;
