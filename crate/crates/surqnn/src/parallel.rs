//! Order-preserving parallel batch evaluation.

use std::num::NonZeroUsize;
use std::thread;

use surqnn_core::{MeasurementModel, MeasurementVector, ParamVector, Result};

/// Wraps a model so that `measure_batch` fans out over `workers` threads.
/// Results keep the input order, so output is independent of the worker
/// count.
pub struct Parallel<'a, M: ?Sized> {
    pub inner: &'a M,
    pub workers: usize,
}

impl<'a, M: MeasurementModel + Sync + ?Sized> Parallel<'a, M> {
    pub fn new(inner: &'a M, workers: usize) -> Self {
        Parallel {
            inner,
            workers: workers.max(1),
        }
    }
}

/// Worker count when none is configured.
pub fn default_workers() -> usize {
    thread::available_parallelism().map_or(1, NonZeroUsize::get)
}

impl<M: MeasurementModel + Sync + ?Sized> MeasurementModel for Parallel<'_, M> {
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn num_outputs(&self) -> usize {
        self.inner.num_outputs()
    }

    fn measure(&self, theta: &[f64]) -> Result<MeasurementVector> {
        self.inner.measure(theta)
    }

    fn measure_batch(&self, thetas: &[ParamVector]) -> Result<Vec<MeasurementVector>> {
        if self.workers <= 1 || thetas.len() < 2 {
            return self.inner.measure_batch(thetas);
        }
        let chunk = thetas.len().div_ceil(self.workers);
        thread::scope(|s| {
            let handles: Vec<_> = thetas
                .chunks(chunk)
                .map(|c| s.spawn(move || self.inner.measure_batch(c)))
                .collect();
            let mut out = Vec::with_capacity(thetas.len());
            for h in handles {
                out.extend(h.join().expect("measurement worker panicked")?);
            }
            Ok(out)
        })
    }
}
