//! Experiment harness around `rcm-core`: threaded executor, configuration,
//! result files, caching, and the acceptance-facing experiment drivers.

pub mod pool;
