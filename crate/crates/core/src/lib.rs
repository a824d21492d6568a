pub mod autodiff;
pub mod corpus;
pub mod minicode;
pub mod scenarios;
pub mod encoder;
pub mod losses;
pub mod metrics;
pub mod scoring;
pub mod pipeline;
