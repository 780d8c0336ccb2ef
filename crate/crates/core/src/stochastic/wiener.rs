//! Reproducible Wiener increments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::StochasticError;

/// Sampled Brownian increments on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    t_grid: Vec<f64>,
    dw: Vec<f64>,
    seed: u64,
}

impl WienerPath {
    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    /// `dW_k` over `[t_k, t_{k+1}]`.
    pub fn increments(&self) -> &[f64] {
        &self.dw
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[cfg(test)]
    pub(crate) fn replace_increments(&mut self, dw: Vec<f64>) {
        assert_eq!(dw.len(), self.dw.len());
        self.dw = dw;
    }

    /// `W(t_k)` with `W(0) = 0`.
    pub fn values(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.t_grid.len());
        let mut acc = 0.0;
        w.push(acc);
        for d in &self.dw {
            acc += d;
            w.push(acc);
        }
        w
    }
}

/// Streaming source of `N(0, dt)` increments. Drawing from a stream with
/// seed `s` yields the same numbers as [`generate_path`] with seed `s`.
#[derive(Debug, Clone)]
pub struct WienerStream {
    rng: ChaCha8Rng,
}

impl WienerStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_increment(&mut self, dt: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * dt.sqrt()
    }
}

/// Checks that `t_grid` starts at 0 and strictly increases.
pub fn check_grid(t_grid: &[f64]) -> Result<(), StochasticError> {
    match t_grid.first() {
        None => return Err(StochasticError::BadGrid("empty time grid".into())),
        Some(t0) if *t0 != 0.0 => {
            return Err(StochasticError::BadGrid(format!("grid starts at {t0}, not 0")))
        }
        _ => {}
    }
    for (k, w) in t_grid.windows(2).enumerate() {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(StochasticError::BadGrid(format!(
                "grid not strictly increasing at index {}",
                k + 1
            )));
        }
    }
    Ok(())
}

pub fn generate_path(seed: u64, t_grid: &[f64]) -> Result<WienerPath, StochasticError> {
    check_grid(t_grid)?;
    let mut stream = WienerStream::new(seed);
    let dw = t_grid
        .windows(2)
        .map(|w| stream.next_increment(w[1] - w[0]))
        .collect();
    Ok(WienerPath {
        t_grid: t_grid.to_vec(),
        dw,
        seed,
    })
}

/// Uniform integration grid with records every `output_every` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleGrid {
    pub t_end: f64,
    pub n_steps: usize,
    pub output_every: usize,
}

impl SampleGrid {
    /// `n_output` equal output intervals with integration step `≤ dt_max`.
    pub fn new(t_end: f64, dt_max: f64, n_output: usize) -> Result<Self, StochasticError> {
        if !(t_end > 0.0 && t_end.is_finite() && dt_max > 0.0 && n_output > 0) {
            return Err(StochasticError::BadGrid(format!(
                "need t_end > 0, dt > 0, n_output > 0 (got {t_end}, {dt_max}, {n_output})"
            )));
        }
        let per = (t_end / n_output as f64 / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let g = Self {
            t_end,
            n_steps: per * n_output,
            output_every: per,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), StochasticError> {
        if !(self.t_end > 0.0 && self.t_end.is_finite())
            || self.n_steps == 0
            || self.output_every == 0
            || !self.n_steps.is_multiple_of(self.output_every)
        {
            return Err(StochasticError::BadGrid(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn n_output(&self) -> usize {
        self.n_steps / self.output_every
    }

    pub fn t_grid(&self) -> Vec<f64> {
        (0..=self.n_steps)
            .map(|k| self.t_end * k as f64 / self.n_steps as f64)
            .collect()
    }

    /// Includes `t = 0`.
    pub fn output_times(&self) -> Vec<f64> {
        (0..=self.n_output())
            .map(|k| self.t_end * (k * self.output_every) as f64 / self.n_steps as f64)
            .collect()
    }
}
