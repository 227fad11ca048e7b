pub mod annotate;
pub mod build;
pub mod eval;
pub mod gen_corpus;
pub mod stats;
pub mod train;
