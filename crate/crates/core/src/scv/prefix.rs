//! Running SCV estimate over a record stream.
//!
//! Each stratum keeps an orthonormal basis of the row space of its design
//! (with a leading intercept column) and the triangular factor of the
//! least-squares problem in that basis, updated with Givens rotations. The
//! residual sum of squares is available after every record, so the running
//! estimate can be scanned at every prefix length.

use super::{infer_components, num_columns, scv_design_row, ScvOptions};
use crate::error::Result;
use crate::estimate::{BootstrapConfig, RnotScan};
use crate::record::TestRecord;
use crate::regression::CENTRING_NOISE;
use crate::stats::two_sided_z;

/// Log-spaced prefix lengths in `[start, n]`, always ending with `n`.
pub fn log_checkpoints(n: usize, per_decade: usize, start: usize) -> Vec<usize> {
    let start = start.max(1);
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let per_decade = per_decade.max(1) as f64;
    let mut k = 0u32;
    loop {
        let v = 10f64.powf(k as f64 / per_decade).round() as usize;
        if v > n {
            break;
        }
        if v >= start && out.last() != Some(&v) {
            out.push(v);
        }
        k += 1;
    }
    if out.last() != Some(&n) {
        out.push(n);
    }
    out
}

/// Design rows and responses computed once, shared by every ordering.
pub struct PreparedRecords {
    y: Vec<f64>,
    stratum: Vec<usize>,
    rows: Vec<Vec<f64>>,
    dims: Vec<usize>,
    opts: ScvOptions,
}

impl PreparedRecords {
    pub fn new(records: &[TestRecord], opts: &ScvOptions) -> Result<Self> {
        let j = infer_components(records)?;
        let l_max = opts.l_max.max(1);
        let dims: Vec<usize> = (0..=l_max).map(|l| num_columns(l, j)).collect();
        let mut y = Vec::with_capacity(records.len());
        let mut stratum = Vec::with_capacity(records.len());
        let mut rows = Vec::with_capacity(records.len());
        for r in records {
            r.check_support()?;
            let l = r.num_control_steps().min(l_max);
            y.push(r.weighted_outcome());
            stratum.push(l);
            rows.push(if opts.fit && dims[l] > 0 { scv_design_row(r, l, j)? } else { Vec::new() });
        }
        Ok(Self { y, stratum, rows, dims, opts: *opts })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn state(&self) -> StreamState {
        StreamState::new(&self.dims, &self.opts)
    }

    fn push(&self, state: &mut StreamState, i: usize) {
        state.push(self.stratum[i], self.y[i], &self.rows[i]);
    }

    /// Running `(n, mean, variance)` at each checkpoint of the given ordering.
    pub fn curve(&self, order: &[usize], checkpoints: &[usize]) -> Vec<(usize, f64, f64)> {
        let mut state = self.state();
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut pos = 0;
        for &cp in checkpoints {
            while pos < cp.min(order.len()) {
                self.push(&mut state, order[pos]);
                pos += 1;
            }
            let (mean, var) = state.moments();
            out.push((pos, mean, var));
        }
        out
    }

    /// First prefix length whose running SCV estimate reaches the RHW threshold.
    pub fn scan(&self, order: &[usize], cfg: &BootstrapConfig) -> RnotScan {
        let z = two_sided_z(cfg.confidence);
        let mut state = self.state();
        let mut scan = RnotScan { first_crossing: None, min_rhw: f64::INFINITY, n_at_min_rhw: 0 };
        for (pos, &i) in order.iter().enumerate() {
            self.push(&mut state, i);
            let n = pos + 1;
            if n < cfg.min_tests.max(1) {
                continue;
            }
            let (mean, var) = state.moments();
            if mean <= 0.0 {
                continue;
            }
            let rhw = z * (var / n as f64).sqrt() / mean;
            if rhw < scan.min_rhw {
                scan.min_rhw = rhw;
                scan.n_at_min_rhw = n;
            }
            if rhw <= cfg.rhw_threshold {
                scan.first_crossing = Some(n);
                break;
            }
        }
        scan
    }
}

/// RNoT scan of an SCV estimate refit along the given ordering.
pub fn scan_rnot_scv(records: &[TestRecord], order: &[usize], opts: &ScvOptions, cfg: &BootstrapConfig) -> Result<RnotScan> {
    Ok(PreparedRecords::new(records, opts)?.scan(order, cfg))
}

/// Incremental least squares of one stratum.
///
/// Rows `x = [1, h]` are expressed in an orthonormal basis of the row space
/// seen so far; a component below the rounding level of `x` does not open a
/// new direction. The factor `[R, r_y; 0, rho]` of `[X B, y]` is kept upper
/// triangular, so the residual sum of squares is `rho^2`.
struct StratumAcc {
    d: usize,
    n: usize,
    mean_y: f64,
    /// Centred sum of squares of the response.
    m2_y: f64,
    /// Basis vectors of length `d + 1`, concatenated.
    basis: Vec<f64>,
    k: usize,
    /// `R`, row-major with stride `d + 1`.
    r: Vec<f64>,
    r_y: Vec<f64>,
    rho: f64,
}

impl StratumAcc {
    fn new(d: usize) -> Self {
        Self { d, n: 0, mean_y: 0.0, m2_y: 0.0, basis: Vec::new(), k: 0, r: Vec::new(), r_y: Vec::new(), rho: 0.0 }
    }

    fn push(&mut self, y: f64, row: &[f64], track_fit: bool) {
        self.n += 1;
        let delta = y - self.mean_y;
        self.mean_y += delta / self.n as f64;
        self.m2_y += delta * (y - self.mean_y);
        if !track_fit || self.d == 0 {
            return;
        }
        debug_assert_eq!(row.len(), self.d);
        let w = self.d + 1;
        if self.r.is_empty() {
            self.r = vec![0.0; w * w];
        }
        let mut x = Vec::with_capacity(w);
        x.push(1.0);
        x.extend_from_slice(row);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();

        // Coordinates in the current basis, with one re-orthogonalization pass.
        let mut coords = vec![0.0; self.k + 1];
        for _ in 0..2 {
            for (c, b) in coords.iter_mut().zip(self.basis.chunks_exact(w)) {
                let t: f64 = b.iter().zip(&x).map(|(u, v)| u * v).sum();
                *c += t;
                for (xv, bv) in x.iter_mut().zip(b) {
                    *xv -= t * bv;
                }
            }
        }
        let rest = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let k = if rest > CENTRING_NOISE * norm && self.k < w {
            // Earlier rows have no component along the new direction: its
            // column is zero above the diagonal and the response row moves up.
            self.basis.extend(x.iter().map(|v| v / rest));
            coords[self.k] = rest;
            self.r_y.push(self.rho);
            self.rho = 0.0;
            self.k += 1;
            self.k
        } else {
            coords.truncate(self.k);
            self.k
        };

        let mut wy = y;
        for i in 0..k {
            let b = coords[i];
            if b == 0.0 {
                continue;
            }
            let a = self.r[i * w + i];
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for j in i..k {
                let rv = self.r[i * w + j];
                self.r[i * w + j] = c * rv + s * coords[j];
                coords[j] = c * coords[j] - s * rv;
            }
            let rv = self.r_y[i];
            self.r_y[i] = c * rv + s * wy;
            wy = c * wy - s * rv;
        }
        self.rho = self.rho.hypot(wy);
    }

    /// Residual sum of squares of the stratum's fit (centred sum of squares
    /// when no fit applies).
    fn rss(&self, opts: &ScvOptions) -> f64 {
        let fitted = opts.fit && self.d > 0 && self.n >= opts.min_stratum_size;
        if fitted {
            (self.rho * self.rho).min(self.m2_y)
        } else {
            self.m2_y
        }
    }
}

struct StreamState {
    strata: Vec<StratumAcc>,
    n: usize,
    opts: ScvOptions,
}

impl StreamState {
    fn new(dims: &[usize], opts: &ScvOptions) -> Self {
        Self { strata: dims.iter().map(|&d| StratumAcc::new(d)).collect(), n: 0, opts: *opts }
    }

    fn push(&mut self, l: usize, y: f64, row: &[f64]) {
        self.n += 1;
        let fit = self.opts.fit;
        self.strata[l].push(y, row, fit);
    }

    /// Mean and sample variance of the adjusted contributions.
    fn moments(&self) -> (f64, f64) {
        if self.n == 0 {
            return (0.0, 0.0);
        }
        let n = self.n as f64;
        let mean = self.strata.iter().map(|s| s.n as f64 * s.mean_y).sum::<f64>() / n;
        if self.n < 2 {
            return (mean, 0.0);
        }
        let ss: f64 = self.strata.iter().filter(|s| s.n > 0).map(|s| s.rss(&self.opts) + s.n as f64 * (s.mean_y - mean).powi(2)).sum();
        (mean, (ss / (n - 1.0)).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoints_are_increasing_and_end_at_n() {
        let c = log_checkpoints(1000, 25, 1);
        assert_eq!(c[0], 1);
        assert_eq!(*c.last().unwrap(), 1000);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(log_checkpoints(2, 25, 1), vec![1, 2]);
        assert_eq!(log_checkpoints(0, 25, 1), Vec::<usize>::new());
        assert!(log_checkpoints(5000, 25, 100).iter().all(|&v| v >= 100));
    }
}
