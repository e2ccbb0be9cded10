//! Data-parallel fan-out with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] maps over
//! work items on the rayon pool; without it, both variants run sequentially.
//! Output order always matches input order, so reductions downstream are
//! deterministic regardless of scheduling.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether `Parallel` actually fans out in this build.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.into_par_iter().map(f).collect()
            }
            _ => items.into_iter().map(f).collect(),
        }
    }
}

/// Elementwise `out[i] = f(a[i], b[i])` kernels over equally shaped arrays.
pub(crate) mod elementwise {
    use ndarray::{Array2, Zip};

    pub fn zip2(a: &Array2<f64>, b: &Array2<f64>, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Array2<f64> {
        let zip = Zip::from(a).and(b);
        #[cfg(feature = "parallel")]
        {
            zip.par_map_collect(|&x, &y| f(x, y))
        }
        #[cfg(not(feature = "parallel"))]
        {
            zip.map_collect(|&x, &y| f(x, y))
        }
    }

    pub fn zip3(
        a: &Array2<f64>,
        b: &Array2<f64>,
        c: &Array2<f64>,
        f: impl Fn(f64, f64, f64) -> f64 + Sync + Send,
    ) -> Array2<f64> {
        let zip = Zip::from(a).and(b).and(c);
        #[cfg(feature = "parallel")]
        {
            zip.par_map_collect(|&x, &y, &z| f(x, y, z))
        }
        #[cfg(not(feature = "parallel"))]
        {
            zip.map_collect(|&x, &y, &z| f(x, y, z))
        }
    }
}
