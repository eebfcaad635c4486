pub mod cc;
pub mod pagerank;
