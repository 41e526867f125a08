//! Benchmark fixtures shared by the criterion targets.

use switchlyap::corpus::corpus;
use switchlyap::SwitchedSystem;

/// A built-in corpus system by name.
pub fn corpus_system(name: &str) -> SwitchedSystem {
    corpus().into_iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no corpus case `{name}`")).build()
}
