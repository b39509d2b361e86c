//! Execution policy for data-parallel loops over ensemble members and
//! sweep points.
//!
//! With the `parallel` feature (default) [`Parallelism::Parallel`] fans work
//! out over the rayon pool. Without it every policy runs sequentially.
//! Results always come back in input order so downstream reductions are
//! bit-for-bit identical between the two policies.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// Whether this build can actually run work concurrently.
    pub fn is_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => {
                use rayon::prelude::*;
                items
                    .par_iter()
                    .enumerate()
                    .map(|(i, item)| f(i, item))
                    .collect()
            }
            _ => items.iter().enumerate().map(|(i, item)| f(i, item)).collect(),
        }
    }
}
