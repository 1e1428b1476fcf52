//! Path enumeration and memoized execution.

mod cache;
mod evaluate;
mod exec;
mod path;

pub use cache::{BatchToken, GlobalCache, KeyPart, SubpathKey, DEFAULT_CACHE_ENTRIES};
pub use evaluate::{evaluate_lattice, evaluate_lattice_including, EvaluationReport};
pub use exec::{execute_path, Batch, Candidate, ExecCounters, ExecError, PathExecutor, Perturb};
pub use path::{count_paths, enumerate_paths, enumerate_paths_including, Enumeration, Path, PathSpace};
