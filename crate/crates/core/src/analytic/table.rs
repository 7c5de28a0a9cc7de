use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::quad::cumulative_uniform;

pub const DEFAULT_GRID_SIZE: usize = 8192;
pub const GRID_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Rows are `G_j`, indexed by `j`. Row 0 is unused and kept at zero.
    G,
    /// Rows are `G_i^{+, n+1-j}`, indexed by `i`.
    GPlus { n: usize, j: usize },
}

/// Functions tabulated on a shared uniform grid over `[0, x_max]`.
#[derive(Debug, Clone)]
pub struct AnalyticTable {
    pub kind: TableKind,
    pub x_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Exact derivatives at the nodes, from the defining recursion.
    pub derivs: Vec<Vec<f64>>,
    pub max_index: usize,
    /// Estimated max absolute error, from comparison with the half-resolution grid.
    pub tolerance: f64,
}

impl AnalyticTable {
    pub fn x_max(&self) -> f64 {
        *self.x_grid.last().unwrap()
    }

    fn spacing(&self) -> f64 {
        self.x_grid[1] - self.x_grid[0]
    }

    /// Cubic Hermite interpolation of row `row` at `x`.
    pub fn eval(&self, row: usize, x: f64) -> Result<f64> {
        if row > self.max_index {
            return Err(Error::Index(format!(
                "row {row} not tabulated (max {})",
                self.max_index
            )));
        }
        let x_max = self.x_max();
        if !(0.0..=x_max * (1.0 + 1e-14)).contains(&x) {
            return Err(Error::TableRange { x, x_max });
        }
        let h = self.spacing();
        let last = self.x_grid.len() - 1;
        let k = ((x / h) as usize).min(last - 1);
        let t = ((x - self.x_grid[k]) / h).clamp(0.0, 1.0);
        let (y0, y1) = (self.values[row][k], self.values[row][k + 1]);
        let (d0, d1) = (self.derivs[row][k] * h, self.derivs[row][k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * d1)
    }
}

fn uniform_grid(x_max: f64, grid_size: usize) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(Error::Index(format!("grid_size = {grid_size} must be >= 2")));
    }
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(Error::Domain {
            what: "table x_max",
            x: x_max,
        });
    }
    let h = x_max / (grid_size - 1) as f64;
    let mut g: Vec<f64> = (0..grid_size).map(|k| k as f64 * h).collect();
    g[grid_size - 1] = x_max;
    Ok(g)
}

/// Rows `G_0 = 0, G_1 = 0, ..., G_{n_max}` and their derivatives on `grid`.
fn g_rows(n_max: usize, grid: &[f64], p: &ModelParams) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let a = p.four_over_nu4();
    let h = grid[1] - grid[0];
    let zeros = vec![0.0; grid.len()];
    let mut values = vec![zeros.clone(), zeros.clone()];
    let mut derivs = vec![zeros.clone(), zeros];
    for j in 2..=n_max {
        let d: Vec<f64> = values[j - 1].iter().map(|&g| 1.0 / (1.0 + a * g)).collect();
        let mut v = cumulative_uniform(&d, h);
        for (vk, &x) in v.iter_mut().zip(grid) {
            *vk = vk.clamp(0.0, x);
        }
        values.push(v);
        derivs.push(d);
    }
    values.truncate(n_max + 1);
    derivs.truncate(n_max + 1);
    (values, derivs)
}

/// Rows `G_0^{+,m} = 1, ..., G_{i_max}^{+,m}` given `G` rows up to `m - 1 + i_max`.
fn g_plus_rows(
    m: usize,
    i_max: usize,
    g: &[Vec<f64>],
    h: f64,
    p: &ModelParams,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let a = p.four_over_nu4();
    let len = g[0].len();
    let mut values = vec![vec![1.0; len]];
    let mut derivs = vec![vec![0.0; len]];
    for i in 1..=i_max {
        let den = &g[m - 1 + i];
        let d: Vec<f64> = values[i - 1]
            .iter()
            .zip(den)
            .map(|(&prev, &gk)| {
                let q = 1.0 + a * gk;
                a * prev / (q * q)
            })
            .collect();
        let mut v = cumulative_uniform(&d, h);
        for vk in v.iter_mut() {
            *vk = vk.max(0.0);
        }
        values.push(v);
        derivs.push(d);
    }
    (values, derivs)
}

/// Max difference over the nodes shared with the every-other-node grid,
/// divided by 15 (the error ratio of a fourth-order rule under halving).
fn halving_estimate(fine: &[Vec<f64>], coarse: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (f, c) in fine.iter().zip(coarse) {
        for (k, &cv) in c.iter().enumerate() {
            worst = worst.max((f[2 * k] - cv).abs());
        }
    }
    worst / 15.0
}

fn coarse_grid(grid: &[f64]) -> Option<Vec<f64>> {
    let g: Vec<f64> = grid.iter().step_by(2).copied().collect();
    (g.len() >= 5).then_some(g)
}

/// Tabulate `G_1 .. G_{n_max}` on a uniform grid with `grid_size` points.
pub fn g_table(
    n_max: usize,
    x_max: f64,
    grid_size: usize,
    p: &ModelParams,
) -> Result<AnalyticTable> {
    if n_max < 1 {
        return Err(Error::Index("n_max must be >= 1".into()));
    }
    let grid = uniform_grid(x_max, grid_size)?;
    let (values, derivs) = g_rows(n_max, &grid, p);
    let tolerance = match coarse_grid(&grid) {
        Some(cg) => halving_estimate(&values, &g_rows(n_max, &cg, p).0),
        None => f64::NAN,
    };
    Ok(AnalyticTable {
        kind: TableKind::G,
        x_grid: grid,
        values,
        derivs,
        max_index: n_max,
        tolerance,
    })
}

/// Like [`g_table`], doubling the resolution from [`DEFAULT_GRID_SIZE`]
/// until the estimated error is below `tol`.
pub fn g_table_refined(
    n_max: usize,
    x_max: f64,
    tol: f64,
    p: &ModelParams,
) -> Result<AnalyticTable> {
    let mut size = DEFAULT_GRID_SIZE;
    let mut best = f64::INFINITY;
    while size <= GRID_CAP {
        let t = g_table(n_max, x_max, size, p)?;
        if t.tolerance <= tol {
            return Ok(t);
        }
        best = best.min(t.tolerance);
        size = 2 * (size - 1) + 1;
    }
    Err(Error::GridCap {
        target: tol,
        achieved: best,
    })
}

/// Tabulate `G_i^{+, n+1-j}` for `i = 0 .. j-1`.
pub fn g_plus_table(
    n: usize,
    j: usize,
    x_max: f64,
    grid_size: usize,
    p: &ModelParams,
) -> Result<AnalyticTable> {
    if j < 1 || j > n {
        return Err(Error::Index(format!("need 1 <= j <= n, got j = {j}, n = {n}")));
    }
    let grid = uniform_grid(x_max, grid_size)?;
    let m = n + 1 - j;
    let build = |grid: &[f64]| {
        let (g, _) = g_rows((n - 1).max(1), grid, p);
        g_plus_rows(m, j - 1, &g, grid[1] - grid[0], p)
    };
    let (values, derivs) = build(&grid);
    let tolerance = match coarse_grid(&grid) {
        Some(cg) => halving_estimate(&values, &build(&cg).0),
        None => f64::NAN,
    };
    Ok(AnalyticTable {
        kind: TableKind::GPlus { n, j },
        x_grid: grid,
        values,
        derivs,
        max_index: j - 1,
        tolerance,
    })
}

/// `(4/nu^4)^i x^i / i!`, an upper bound for `G_i^{+,.}(x)`.
pub fn g_plus_bound(i: usize, x: f64, p: &ModelParams) -> f64 {
    let ax = p.four_over_nu4() * x;
    (1..=i).fold(1.0, |acc, k| acc * ax / k as f64)
}

/// `S_n` at every node of a uniform grid over `[0, x_max]`.
pub fn s_n_grid(n: usize, x_max: f64, grid_size: usize, p: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = uniform_grid(x_max, grid_size)?;
    let h = grid[1] - grid[0];
    let (g, _) = g_rows(n.max(1), &grid, p);
    let mut terms: Vec<Vec<f64>> = vec![vec![1.0; grid.len()]];
    for j in 1..=n {
        let (rows, _) = g_plus_rows(n + 1 - j, j, &g, h, p);
        terms.push(rows.into_iter().last().unwrap());
    }
    let s = (0..grid.len())
        .map(|k| crate::quad::compensated_sum(terms.iter().map(|t| t[k])))
        .collect();
    Ok((grid, s))
}

/// `S_n(x) = sum_{j=0}^n G_j^{+, n+1-j}(x)`.
pub fn s_n(n: usize, x: f64, p: &ModelParams) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain { what: "S_n", x });
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let (_, s) = s_n_grid(n, x, DEFAULT_GRID_SIZE, p)?;
    Ok(*s.last().unwrap())
}
