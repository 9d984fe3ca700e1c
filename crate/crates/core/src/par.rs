//! Order-preserving map over independent work items, data-parallel when
//! the `parallel` feature is enabled.

/// How a batch of independent items is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Spread the items over the rayon thread pool (sequential when the
    /// `parallel` feature is off).
    #[default]
    Parallel,
    Sequential,
}

/// `items.iter().map(f)` collected in input order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
