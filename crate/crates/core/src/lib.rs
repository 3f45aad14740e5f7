pub mod tensor;
pub mod corpus;
pub mod metrics;
pub mod stats;
pub mod model;
pub mod teacher;
pub mod tokenizer;
