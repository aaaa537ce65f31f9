//! Data-parallel map over independent items (sentences, seeds, random trials).
//!
//! Results always come back in input order, so any reduction done by the caller is
//! identical whichever mode ran.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    /// Uses the rayon pool when built with the `parallel` feature, otherwise runs
    /// sequentially.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

impl ExecMode {
    pub fn map<I, R, F>(self, items: &[I], f: F) -> Vec<R>
    where
        I: Sync,
        R: Send,
        F: Fn(usize, &I) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecMode::Parallel => items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect(),
            _ => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
        }
    }

    /// Like [`ExecMode::map`] for fallible work; the first error in input order wins.
    pub fn try_map<I, R, E, F>(self, items: &[I], f: F) -> Result<Vec<R>, E>
    where
        I: Sync,
        R: Send,
        E: Send,
        F: Fn(usize, &I) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}
