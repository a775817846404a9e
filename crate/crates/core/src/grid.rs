//! Time grids on `[0, T]` with optional geometric bunching at a singular time.
//!
//! A singular zone of `depth_octaves` octaves sits at distance `anchor·T` from
//! the singular end, with `points_per_octave` points per halving of the
//! distance. Refining a [`GridSpec`] doubles both the uniform step count and
//! the depth while keeping the anchor and the per-octave density, so every
//! coarse grid point is also a point of the finer grid.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularSide {
    Initial,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singularity {
    pub side: SingularSide,
    /// Start of the zone, as a fraction of the horizon.
    pub anchor: f64,
    pub depth_octaves: u32,
    pub points_per_octave: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub horizon: f64,
    pub n_steps: usize,
    pub singularity: Option<Singularity>,
}

/// Strictly increasing grid from 0 to `horizon`.
///
/// `remaining[k]` is `T - times[k]` evaluated without cancellation, which is
/// what models with a terminal singularity need.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    times: Vec<f64>,
    remaining: Vec<f64>,
    singular: Option<SingularSide>,
}

fn dyadic_power(j: u64, m: u32) -> f64 {
    let q = (j / m as u64) as i32;
    let r = (j % m as u64) as f64;
    libm::ldexp(libm::exp2(-r / m as f64), -q)
}

impl GridSpec {
    pub fn uniform(horizon: f64, n_steps: usize) -> Self {
        GridSpec { horizon, n_steps, singularity: None }
    }

    pub fn with_singularity(mut self, s: Singularity) -> Self {
        self.singularity = Some(s);
        self
    }

    /// Spec of refinement level `level` (level 0 is `self`).
    pub fn refined(&self, level: u32) -> GridSpec {
        let mut out = *self;
        out.n_steps = self.n_steps << level;
        if let Some(s) = out.singularity.as_mut() {
            s.depth_octaves <<= level;
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon {} must be positive", self.horizon)));
        }
        if self.n_steps < 2 {
            return Err(Error::InvalidGrid(format!("n_steps {} must be at least 2", self.n_steps)));
        }
        if let Some(s) = self.singularity {
            if !(s.anchor > 0.0 && s.anchor <= 0.5) {
                return Err(Error::InvalidGrid(format!("anchor {} must lie in (0, 1/2]", s.anchor)));
            }
            if s.depth_octaves == 0 || s.points_per_octave == 0 {
                return Err(Error::InvalidGrid("singular zone needs depth and density".into()));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<TimeGrid> {
        self.validate()?;
        let t_end = self.horizon;
        let n = self.n_steps;
        let uniform = |k: usize| (k as f64 / n as f64) * t_end;
        let uniform_rem = |k: usize| ((n - k) as f64 / n as f64) * t_end;
        let mut times = Vec::with_capacity(n + 1);
        let mut remaining = Vec::with_capacity(n + 1);
        match self.singularity {
            None => {
                for k in 0..=n {
                    times.push(uniform(k));
                    remaining.push(uniform_rem(k));
                }
            }
            Some(s) => {
                let edge = s.anchor * t_end;
                let total = s.depth_octaves as u64 * s.points_per_octave as u64;
                match s.side {
                    SingularSide::Initial => {
                        times.push(0.0);
                        remaining.push(t_end);
                        for j in (0..=total).rev() {
                            let t = edge * dyadic_power(j, s.points_per_octave);
                            times.push(t);
                            remaining.push(t_end - t);
                        }
                        for k in 0..=n {
                            let t = uniform(k);
                            if t > edge {
                                times.push(t);
                                remaining.push(uniform_rem(k));
                            }
                        }
                    }
                    SingularSide::Terminal => {
                        for k in 0..=n {
                            let r = uniform_rem(k);
                            if r > edge {
                                times.push(uniform(k));
                                remaining.push(r);
                            }
                        }
                        for j in 0..=total {
                            let r = edge * dyadic_power(j, s.points_per_octave);
                            times.push(t_end - r);
                            remaining.push(r);
                        }
                        times.push(t_end);
                        remaining.push(0.0);
                    }
                }
            }
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid(format!(
                "grid points {k} and {} coincide in floating point; reduce the singular depth",
                k + 1
            )));
        }
        Ok(TimeGrid {
            horizon: t_end,
            times,
            remaining,
            singular: self.singularity.map(|s| s.side),
        })
    }

    /// Probe times for divergence localization: `T·j/16` plus the singular
    /// time's geometric neighbours `anchor·T·2^{-j}`, `j < depth_octaves`.
    /// Every probe is snapped down to a point of this (level-0) grid, so it
    /// is present on every refinement.
    pub fn probe_times(&self) -> Result<Vec<f64>> {
        let grid = self.build()?;
        let t_end = self.horizon;
        let mut raw: Vec<f64> = (0..=16).map(|j| (j as f64 / 16.0) * t_end).collect();
        if let Some(s) = self.singularity {
            let edge = s.anchor * t_end;
            for j in 0..s.depth_octaves as i32 {
                let off = libm::ldexp(edge, -j);
                raw.push(match s.side {
                    SingularSide::Initial => off,
                    SingularSide::Terminal => t_end - off,
                });
            }
        }
        let mut probes: Vec<f64> = raw.into_iter().map(|t| grid.times[grid.floor_index(t)]).collect();
        probes.sort_by(f64::total_cmp);
        probes.dedup();
        Ok(probes)
    }
}

impl TimeGrid {
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        GridSpec::uniform(horizon, n_steps).build()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn remaining(&self) -> &[f64] {
        &self.remaining
    }

    pub fn singular_side(&self) -> Option<SingularSide> {
        self.singular
    }

    /// Step length. Near a terminal singularity it is taken from `remaining`,
    /// where the spacing is exact; `times` there is rounded relative to `T`.
    pub fn dt(&self, k: usize) -> f64 {
        match self.singular {
            Some(SingularSide::Terminal) => self.remaining[k] - self.remaining[k + 1],
            _ => self.times[k + 1] - self.times[k],
        }
    }

    /// Exact lookup of a grid time.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.binary_search_by(|x| x.total_cmp(&t)).ok()
    }

    /// Largest index with `times[k] <= t` (0 if `t` precedes the grid).
    pub fn floor_index(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t).saturating_sub(1)
    }

    /// Smallest index with `times[k] >= t` (last index if `t` is past `T`).
    pub fn ceil_index(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x < t).min(self.times.len() - 1)
    }

    /// Positions of this grid's points inside `finer`.
    pub fn embedding_in(&self, finer: &TimeGrid) -> Result<Vec<usize>> {
        if self.horizon != finer.horizon {
            return Err(Error::NotNested);
        }
        self.times.iter().map(|&t| finer.index_of(t).ok_or(Error::NotNested)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid() {
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        assert_eq!(g.times(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.remaining(), &[2.0, 1.5, 1.0, 0.5, 0.0]);
        assert!(TimeGrid::uniform(1.0, 1).is_err());
        assert!(TimeGrid::uniform(0.0, 8).is_err());
    }

    #[test]
    fn terminal_zone_is_geometric_and_nested() {
        let s = Singularity { side: SingularSide::Terminal, anchor: 1.0 / 16.0, depth_octaves: 4, points_per_octave: 2 };
        let spec = GridSpec::uniform(1.0, 32).with_singularity(s);
        let g0 = spec.build().unwrap();
        let g1 = spec.refined(1).build().unwrap();
        assert_eq!(*g0.times().last().unwrap(), 1.0);
        assert_eq!(g0.remaining()[g0.n_steps() - 1], 1.0 / 256.0);
        assert!(g0.embedding_in(&g1).is_ok());
        assert_eq!(g1.remaining()[g1.n_steps() - 1], 1.0 / 4096.0);
    }

    #[test]
    fn initial_zone() {
        let s = Singularity { side: SingularSide::Initial, anchor: 0.125, depth_octaves: 3, points_per_octave: 1 };
        let g = GridSpec::uniform(1.0, 8).with_singularity(s).build().unwrap();
        assert_eq!(&g.times()[..5], &[0.0, 0.015625, 0.03125, 0.0625, 0.125]);
        assert_eq!(g.times()[5], 0.25);
    }

    #[test]
    fn probes_snap_to_grid() {
        let s = Singularity { side: SingularSide::Terminal, anchor: 1.0 / 16.0, depth_octaves: 3, points_per_octave: 4 };
        let spec = GridSpec::uniform(1.0, 20).with_singularity(s);
        let g = spec.build().unwrap();
        for p in spec.probe_times().unwrap() {
            assert!(g.index_of(p).is_some());
        }
    }

    #[test]
    fn too_deep_terminal_zone_is_rejected() {
        let s = Singularity { side: SingularSide::Terminal, anchor: 0.5, depth_octaves: 60, points_per_octave: 1 };
        assert!(GridSpec::uniform(1.0, 4).with_singularity(s).build().is_err());
    }
}
