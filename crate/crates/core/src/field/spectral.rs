use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::mollifier::MollifierSpec;
use crate::error::{invalid, Error, Result};

/// Periodic box `[0, L)^2` with `N x N` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub box_length: f64,
    pub grid_n: usize,
}

impl GridSpec {
    /// Validated grid; the spacing must resolve the mollifier, `h <= eps/8`.
    pub fn new(box_length: f64, grid_n: usize, eps: f64) -> Result<Self> {
        if !(box_length > 0.0 && box_length.is_finite()) {
            return Err(invalid("box_length", format!("{box_length} must be positive")));
        }
        if grid_n < 2 || !grid_n.is_power_of_two() {
            return Err(invalid("grid_n", format!("{grid_n} is not a power of two >= 2")));
        }
        let g = GridSpec {
            box_length,
            grid_n,
        };
        let limit = eps / 8.0;
        if g.spacing() > limit * (1.0 + 1e-12) {
            return Err(Error::GridTooCoarse {
                h: g.spacing(),
                limit,
            });
        }
        Ok(g)
    }

    /// Smallest power-of-two grid on `box_length` with `h <= eps/8`.
    pub fn resolving(box_length: f64, eps: f64) -> Result<Self> {
        let cells = (8.0 * box_length / eps * (1.0 - 1e-12)).ceil().max(2.0) as usize;
        Self::new(box_length, cells.next_power_of_two(), eps)
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.grid_n as f64
    }

    /// Wavenumber spacing `2 pi / L`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.box_length
    }
}

/// Mode coefficients of one draw on the square `|m1|, |m2| <= k_index`,
/// stored row-major in `m2`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub k_index: usize,
    /// `(omega_hat_1, omega_hat_2)` per mode; zero outside the support.
    pub amps: Vec<[Complex64; 2]>,
    /// Max of `|k . omega_hat| / (|k| |omega_hat|)` over the retained modes.
    pub divergence_max: f64,
}

impl Spectrum {
    pub fn side(&self) -> usize {
        2 * self.k_index + 1
    }

    pub fn index(&self, m1: i64, m2: i64) -> usize {
        let k = self.k_index as i64;
        ((m2 + k) as usize) * self.side() + (m1 + k) as usize
    }

    pub fn get(&self, m1: i64, m2: i64) -> [Complex64; 2] {
        self.amps[self.index(m1, m2)]
    }
}

/// Draws spectra for one (grid, mollifier) pair. Holds the FFT plan and
/// per-mode standard deviations so repeated draws share them.
#[derive(Clone)]
pub struct FieldSampler {
    pub grid: GridSpec,
    pub mollifier: MollifierSpec,
    k_index: usize,
    /// Half-plane modes `(m1, m2, sd)` in draw order.
    modes: Vec<(i64, i64, f64)>,
    fft: Arc<dyn Fft<f64>>,
    twiddle: Arc<Vec<Complex64>>,
}

impl std::fmt::Debug for FieldSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSampler")
            .field("grid", &self.grid)
            .field("mollifier", &self.mollifier)
            .field("k_index", &self.k_index)
            .field("modes", &self.modes.len())
            .finish()
    }
}

impl FieldSampler {
    pub fn new(grid: GridSpec, mollifier: MollifierSpec) -> Result<Self> {
        let grid = GridSpec::new(grid.box_length, grid.grid_n, mollifier.eps)?;
        let dk = grid.dk();
        let cutoff = mollifier.support() / mollifier.eps;
        let k_index = (cutoff / dk).floor() as usize;
        if 2 * k_index + 1 > grid.grid_n {
            return Err(Error::GridTooCoarse {
                h: grid.spacing(),
                limit: PI / cutoff,
            });
        }
        let k = k_index as i64;
        let mut modes = Vec::new();
        for m2 in 0..=k {
            for m1 in -k..=k {
                if m2 == 0 && m1 <= 0 {
                    continue;
                }
                let kk = dk * ((m1 * m1 + m2 * m2) as f64).sqrt();
                if kk >= cutoff {
                    continue;
                }
                let sd = dk * mollifier.v_hat_eps(kk).sqrt();
                if sd > 0.0 {
                    modes.push((m1, m2, sd));
                }
            }
        }
        let n = grid.grid_n;
        let fft = FftPlanner::new().plan_fft_inverse(n);
        let twiddle = (0..n)
            .map(|q| Complex64::from_polar(1.0, 2.0 * PI * q as f64 / n as f64))
            .collect();
        Ok(FieldSampler {
            grid,
            mollifier,
            k_index,
            modes,
            fft,
            twiddle: Arc::new(twiddle),
        })
    }

    pub fn k_index(&self) -> usize {
        self.k_index
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Variance of one field component on the lattice,
    /// `sum_m sd_m^2 (u_1^2 + u_2^2) / 2` over the full plane.
    pub fn lattice_component_variance(&self) -> f64 {
        // each half-plane mode stands for itself and its mirror
        crate::quad::compensated_sum(self.modes.iter().map(|&(_, _, sd)| sd * sd))
    }

    pub fn draw(&self, seed: u64) -> Spectrum {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.draw_with(&mut rng)
    }

    pub fn draw_with<R: Rng>(&self, rng: &mut R) -> Spectrum {
        let k_index = self.k_index;
        let side = 2 * k_index + 1;
        let zero = Complex64::new(0.0, 0.0);
        let mut spec = Spectrum {
            k_index,
            amps: vec![[zero; 2]; side * side],
            divergence_max: 0.0,
        };
        let dk = self.grid.dk();
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        for &(m1, m2, sd) in &self.modes {
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            let a = Complex64::new(g1, g2) * (sd * s2);
            let (k1, k2) = (dk * m1 as f64, dk * m2 as f64);
            let kn = k1.hypot(k2);
            // perpendicular unit vector (k2, -k1)/|k|; i u a is the curl of a scalar mode
            let ia = Complex64::new(-a.im, a.re);
            let w = [ia * (k2 / kn), ia * (-k1 / kn)];
            let div = (w[0] * k1 + w[1] * k2).norm();
            let scale = kn * (w[0].norm_sqr() + w[1].norm_sqr()).sqrt();
            if scale > 0.0 {
                spec.divergence_max = spec.divergence_max.max(div / scale);
            }
            let i = spec.index(m1, m2);
            spec.amps[i] = w;
            let j = spec.index(-m1, -m2);
            spec.amps[j] = [w[0].conj(), w[1].conj()];
        }
        spec
    }

    /// Inverse FFT along `x_1` of the packed coefficients
    /// `omega_hat_1 + i omega_hat_2`, one row per `m2`.
    fn row_transforms(&self, spec: &Spectrum) -> Vec<Vec<Complex64>> {
        let n = self.grid.grid_n;
        let k = self.k_index as i64;
        let mut rows = Vec::with_capacity(spec.side());
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for m2 in -k..=k {
            let mut row = vec![Complex64::new(0.0, 0.0); n];
            for m1 in -k..=k {
                let [w1, w2] = spec.get(m1, m2);
                row[m1.rem_euclid(n as i64) as usize] = w1 + Complex64::new(-w2.im, w2.re);
            }
            self.fft.process_with_scratch(&mut row, &mut scratch);
            rows.push(row);
        }
        rows
    }

    /// Full-grid synthesis.
    pub fn synthesize(&self, spec: &Spectrum) -> Vec<[f64; 2]> {
        let n = self.grid.grid_n;
        let k = self.k_index as i64;
        let rows = self.row_transforms(spec);
        let mut values = vec![[0.0; 2]; n * n];
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for j1 in 0..n {
            col.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (r, m2) in (-k..=k).enumerate() {
                col[m2.rem_euclid(n as i64) as usize] = rows[r][j1];
            }
            self.fft.process_with_scratch(&mut col, &mut scratch);
            for (j2, z) in col.iter().enumerate() {
                values[j2 * n + j1] = [z.re, z.im];
            }
        }
        values
    }

    pub fn sample(&self, seed: u64) -> SpectralField {
        let spectrum = self.draw(seed);
        let values = self.synthesize(&spectrum);
        SpectralField {
            spec: self.grid,
            mollifier: self.mollifier,
            values,
            seed,
            fourier_divergence_max: spectrum.divergence_max,
        }
    }

    /// A field that synthesises 32x32 tiles on first touch. Same values as
    /// [`FieldSampler::sample`] up to rounding, at a fraction of the cost
    /// when a path visits a small part of a large box.
    pub fn sample_lazy(&self, seed: u64) -> LazyField {
        let spectrum = self.draw(seed);
        self.lazy_from(&spectrum, seed)
    }

    pub fn lazy_from(&self, spectrum: &Spectrum, seed: u64) -> LazyField {
        let n = self.grid.grid_n;
        let tile = TILE.min(n);
        let tiles_per_side = n / tile;
        LazyField {
            spec: self.grid,
            seed,
            fourier_divergence_max: spectrum.divergence_max,
            k_index: self.k_index as i64,
            rows: self.row_transforms(spectrum),
            twiddle: Arc::clone(&self.twiddle),
            tile,
            tiles_per_side,
            tiles: vec![None; tiles_per_side * tiles_per_side],
            tiles_built: 0,
        }
    }
}

/// Shorthand for `FieldSampler::new(spec, m)?.sample(seed)`.
pub fn sample_field(spec: GridSpec, m: MollifierSpec, seed: u64) -> Result<SpectralField> {
    Ok(FieldSampler::new(spec, m)?.sample(seed))
}

/// A vector field that can be queried along a particle path.
pub trait VectorField {
    fn eval(&mut self, x: [f64; 2]) -> [f64; 2];
}

/// Closure-backed field for tests and synthetic environments.
pub struct Synthetic<F>(pub F);

impl<F: FnMut([f64; 2]) -> [f64; 2]> VectorField for Synthetic<F> {
    fn eval(&mut self, x: [f64; 2]) -> [f64; 2] {
        (self.0)(x)
    }
}

/// Wrap a position into cell indices and fractional offsets.
fn locate(x: f64, h: f64, n: usize) -> (usize, usize, f64) {
    let u = x / h;
    let f = u.floor();
    let j = (f as i64).rem_euclid(n as i64) as usize;
    (j, (j + 1) % n, u - f)
}

fn bilinear(
    x: [f64; 2],
    h: f64,
    n: usize,
    mut node: impl FnMut(usize, usize) -> [f64; 2],
) -> [f64; 2] {
    let (a0, a1, fx) = locate(x[0], h, n);
    let (b0, b1, fy) = locate(x[1], h, n);
    let v00 = node(a0, b0);
    let v10 = node(a1, b0);
    let v01 = node(a0, b1);
    let v11 = node(a1, b1);
    let mut out = [0.0; 2];
    for c in 0..2 {
        out[c] = (1.0 - fy) * ((1.0 - fx) * v00[c] + fx * v10[c])
            + fy * ((1.0 - fx) * v01[c] + fx * v11[c]);
    }
    out
}

/// One sampled environment on the full grid.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub spec: GridSpec,
    pub mollifier: MollifierSpec,
    /// Row-major, `values[j2 * N + j1]` is the node at `(j1 h, j2 h)`.
    pub values: Vec<[f64; 2]>,
    pub seed: u64,
    pub fourier_divergence_max: f64,
}

impl SpectralField {
    pub fn node(&self, j1: usize, j2: usize) -> [f64; 2] {
        self.values[j2 * self.spec.grid_n + j1]
    }

    pub fn eval_at(&self, x: [f64; 2]) -> [f64; 2] {
        bilinear(x, self.spec.spacing(), self.spec.grid_n, |a, b| self.node(a, b))
    }

    pub fn max_speed(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }
}

/// Bilinear interpolation of `f` at `x`, wrapped into the torus.
pub fn eval_field(f: &SpectralField, x: [f64; 2]) -> [f64; 2] {
    f.eval_at(x)
}

impl VectorField for SpectralField {
    fn eval(&mut self, x: [f64; 2]) -> [f64; 2] {
        self.eval_at(x)
    }
}

impl VectorField for &SpectralField {
    fn eval(&mut self, x: [f64; 2]) -> [f64; 2] {
        self.eval_at(x)
    }
}

const TILE: usize = 32;

type Tile = Box<[[f64; 2]]>;

/// Environment synthesised tile by tile on demand.
#[derive(Clone)]
pub struct LazyField {
    pub spec: GridSpec,
    pub seed: u64,
    pub fourier_divergence_max: f64,
    k_index: i64,
    rows: Vec<Vec<Complex64>>,
    twiddle: Arc<Vec<Complex64>>,
    tile: usize,
    tiles_per_side: usize,
    tiles: Vec<Option<Tile>>,
    tiles_built: usize,
}

impl LazyField {
    pub fn tiles_built(&self) -> usize {
        self.tiles_built
    }

    fn build_tile(&self, t1: usize, t2: usize) -> Tile {
        let n = self.spec.grid_n as i64;
        let b = self.tile;
        let (c1, c2) = (t1 * b, t2 * b);
        let mut acc = vec![Complex64::new(0.0, 0.0); b * b];
        for (r, m2) in (-self.k_index..=self.k_index).enumerate() {
            let row = &self.rows[r][c1..c1 + b];
            for dj in 0..b {
                let j2 = (c2 + dj) as i64;
                let w = self.twiddle[(m2 * j2).rem_euclid(n) as usize];
                let out = &mut acc[dj * b..(dj + 1) * b];
                for (o, &z) in out.iter_mut().zip(row) {
                    *o += z * w;
                }
            }
        }
        acc.into_iter().map(|z| [z.re, z.im]).collect()
    }

    pub fn node(&mut self, j1: usize, j2: usize) -> [f64; 2] {
        let b = self.tile;
        let (t1, t2) = (j1 / b, j2 / b);
        let id = t2 * self.tiles_per_side + t1;
        if self.tiles[id].is_none() {
            self.tiles[id] = Some(self.build_tile(t1, t2));
            self.tiles_built += 1;
        }
        self.tiles[id].as_ref().unwrap()[(j2 % b) * b + j1 % b]
    }
}

impl VectorField for LazyField {
    fn eval(&mut self, x: [f64; 2]) -> [f64; 2] {
        let (h, n) = (self.spec.spacing(), self.spec.grid_n);
        bilinear(x, h, n, |a, b| self.node(a, b))
    }
}
