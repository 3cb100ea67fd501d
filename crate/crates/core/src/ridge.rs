//! Multi-target ridge regression with per-target penalty selection.
//!
//! Design columns are z-scored and targets centered with training-frame
//! statistics. Each target picks its own penalty from a [`PenaltyGrid`] by
//! contiguous-block cross-validation over frames. Every fold is factorized
//! once (an eigendecomposition of its Gram or kernel matrix, i.e. the right
//! or left singular vectors of the design) and all penalties are evaluated
//! from that single factorization.
//!
//! Validation errors are first computed in single precision. Targets whose
//! best penalty is not ahead by a clear margin are re-evaluated in double
//! precision, so the chosen penalties match a double-precision sweep. The
//! final refit is always double precision.
//!
//! Targets are processed in fixed-width chunks so that results do not depend
//! on how many worker threads run them.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, RowDVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{eigh, mul, mul_f32, mul_nt, mul_ref, mul_tn, mul_tt, rows};

/// Targets per work unit. Fixed so chunking never depends on thread count.
const TARGET_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyGrid(Vec<f64>);

impl PenaltyGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("penalty grid is empty".into()));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Invalid("penalties must be positive and finite".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("penalties must be strictly increasing".into()));
        }
        Ok(Self(values))
    }

    /// `count` powers of ten spaced evenly between `10^lo` and `10^hi`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let values = match count {
            0 => Vec::new(),
            1 => vec![10f64.powf(lo)],
            _ => {
                let step = (hi - lo) / (count - 1) as f64;
                (0..count)
                    .map(|i| {
                        let e = lo + step * i as f64;
                        if e.fract() == 0.0 && e.abs() < 300.0 {
                            10f64.powi(e as i32)
                        } else {
                            10f64.powf(e)
                        }
                    })
                    .collect()
            }
        };
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for PenaltyGrid {
    /// Ten values, `1e-1` through `1e8`.
    fn default() -> Self {
        Self::log_spaced(-1.0, 8.0, 10).expect("static grid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeOptions {
    pub grid: PenaltyGrid,
    pub inner_folds: usize,
    /// When false the design is used as-is: no z-scoring, no centering, no
    /// intercept.
    pub standardize: bool,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            grid: PenaltyGrid::default(),
            inner_folds: 5,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    /// `width × targets`; rows of excluded (constant) columns are zero.
    pub weights: DMatrix<f64>,
    pub chosen_penalty: Vec<f64>,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    /// False for constant training columns, which carry zero weight.
    pub retained: Vec<bool>,
    pub intercepts: Vec<f64>,
}

impl RidgeFit {
    pub fn width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn targets(&self) -> usize {
        self.weights.ncols()
    }

    /// Predictions including intercepts.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = self.predict_linear(x)?;
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.intercepts[j]);
        }
        Ok(out)
    }

    /// The linear term only: standardized design times weights, no intercept.
    pub fn predict_linear(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.width() {
            return Err(Error::Shape(format!(
                "design has {} columns, fit expects {}",
                x.ncols(),
                self.width()
            )));
        }
        let z = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            if self.retained[j] {
                (x[(i, j)] - self.column_means[j]) / self.column_stds[j]
            } else {
                0.0
            }
        });
        Ok(mul(&z, &self.weights))
    }
}

pub fn predict(fit: &RidgeFit, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    fit.predict(x)
}

/// Splits `0..n` into `k` contiguous blocks; the first `n % k` blocks get one
/// extra element.
pub fn contiguous_folds(n: usize, k: usize) -> Vec<Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

struct Standardization {
    means: Vec<f64>,
    stds: Vec<f64>,
    retained: Vec<bool>,
}

fn column_stats(x: &DMatrix<f64>, standardize: bool) -> Standardization {
    let p = x.ncols();
    if !standardize {
        return Standardization {
            means: vec![0.0; p],
            stds: vec![1.0; p],
            retained: vec![true; p],
        };
    }
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(p);
    let mut stds = Vec::with_capacity(p);
    let mut retained = Vec::with_capacity(p);
    for col in x.column_iter() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let keep = std > 1e-10 * mean.abs().max(1.0);
        means.push(mean);
        stds.push(if keep { std } else { 1.0 });
        retained.push(keep);
    }
    Standardization { means, stds, retained }
}

/// Eigendecomposition of a centered design's Gram matrix (`n >= p`) or
/// kernel matrix (`n < p`). Either route gives the ridge solution for any
/// penalty from one factorization.
pub struct RidgePath {
    z: DMatrix<f64>,
    route: Route,
}

enum Route {
    /// `ZᵀZ = V diag(eig) Vᵀ`
    Primal { v: DMatrix<f64>, eig: DVector<f64> },
    /// `ZZᵀ = U diag(eig) Uᵀ`; `zt_u = Zᵀ U`
    Dual { u: DMatrix<f64>, zt_u: DMatrix<f64>, eig: DVector<f64> },
}

impl RidgePath {
    /// Factorizes `z` as given (callers center or standardize beforehand).
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        let (n, p) = z.shape();
        let route = if n >= p {
            let (v, eig) = eigh(&mul_tn(&z, &z))?;
            Route::Primal { v, eig }
        } else {
            let (u, eig) = eigh(&mul_nt(&z, &z))?;
            let zt_u = mul_tn(&z, &u);
            Route::Dual { u, zt_u, eig }
        };
        Ok(Self { z, route })
    }

    /// Weights for every target column of `y` at one penalty.
    pub fn weights(&self, y: &DMatrix<f64>, penalty: f64) -> DMatrix<f64> {
        self.weights_per_target(y, None, &vec![penalty; y.ncols()])
    }

    /// Weights with a separate penalty per target. `cross_t` may carry a
    /// precomputed `yᵀZ` for the primal route.
    fn weights_per_target(&self, y: &DMatrix<f64>, cross_t: Option<&DMatrix<f64>>, penalties: &[f64]) -> DMatrix<f64> {
        match &self.route {
            Route::Primal { v, eig } => {
                let mut b = match cross_t {
                    Some(h) => mul_tt(v, h),
                    None => mul_tn(v, &mul_tn(&self.z, y)),
                };
                shrink_columns(&mut b, eig, penalties);
                mul(v, &b)
            }
            Route::Dual { u, zt_u, eig } => {
                let mut b = mul_tn(u, y);
                shrink_columns(&mut b, eig, penalties);
                mul(zt_u, &b)
            }
        }
    }
}

/// Scales entry `(i, j)` by `1 / (eig_i + penalty_j)`.
fn shrink_columns(b: &mut DMatrix<f64>, eig: &DVector<f64>, penalties: &[f64]) {
    for (mut col, &lam) in b.column_iter_mut().zip(penalties) {
        for (x, e) in col.iter_mut().zip(eig.iter()) {
            *x /= e + lam;
        }
    }
}

/// One inner validation block with held-out predictors for every penalty,
/// stacked penalty-major: rows `l*n_val .. (l+1)*n_val` belong to penalty `l`.
struct FoldOperator {
    val: Range<usize>,
    n_train: usize,
    stacked: DMatrix<f64>,
    /// `stackedᵀ` in single precision, for screening.
    screen: DMatrix<f32>,
    /// Training rows the dual operator reads; empty on the primal route.
    train_rows: Vec<usize>,
}

impl FoldOperator {
    fn build(z: &DMatrix<f64>, gram: &DMatrix<f64>, val: Range<usize>, grid: &[f64], center: bool) -> Result<Self> {
        let (n, p) = z.shape();
        let n_val = val.len();
        let n_train = n - n_val;
        let z_val = z.rows(val.start, n_val);
        // Inner-train mean; Z is centered overall so it follows from the block sum.
        let mean: DVector<f64> = if center && n_train > 0 {
            let total = z.row_sum().transpose();
            let block = z_val.row_sum().transpose();
            (total - block) / n_train as f64
        } else {
            DVector::zeros(p)
        };
        let mut z_val_c = z_val.clone_owned();
        for mut row in z_val_c.row_iter_mut() {
            row -= mean.transpose();
        }

        if n_train >= p {
            let zv = rows(z, val.start, n_val);
            let gram_val = mul_ref(zv.transpose(), zv);
            let mut g = gram - gram_val;
            if center {
                g -= (&mean * mean.transpose()) * n_train as f64;
            }
            let (v, eig) = eigh(&g)?;
            let a = mul(&z_val_c, &v);
            let stacked = stack_penalties(&a, &eig, &v, grid);
            let screen = stacked.transpose().map(|x| x as f32);
            Ok(Self { val, n_train, stacked, screen, train_rows: Vec::new() })
        } else {
            let train_rows: Vec<usize> = (0..n).filter(|i| !val.contains(i)).collect();
            let mut z_tr = z.select_rows(&train_rows);
            for mut row in z_tr.row_iter_mut() {
                row -= mean.transpose();
            }
            let (u, eig) = eigh(&mul_nt(&z_tr, &z_tr))?;
            let a = mul(&z_val_c, &mul_tn(&z_tr, &u));
            let stacked = stack_penalties(&a, &eig, &u, grid);
            let screen = stacked.transpose().map(|x| x as f32);
            Ok(Self { val, n_train, stacked, screen, train_rows })
        }
    }
}

/// Stacks `a · diag(1 / (eig + λ)) · basisᵀ` over the grid.
fn stack_penalties(a: &DMatrix<f64>, eig: &DVector<f64>, basis: &DMatrix<f64>, grid: &[f64]) -> DMatrix<f64> {
    let rows = a.nrows();
    let mut scaled = DMatrix::zeros(rows * grid.len(), a.ncols());
    for (l, &lam) in grid.iter().enumerate() {
        for (i, e) in eig.iter().enumerate() {
            let src = a.column(i);
            let mut dst = scaled.column_mut(i);
            for r in 0..rows {
                dst[l * rows + r] = src[r] / (e + lam);
            }
        }
    }
    mul_nt(&scaled, basis)
}

/// Fits one ridge model per target column of `y`.
///
/// Each target's penalty minimizes the mean validation MSE over
/// `inner_folds` contiguous blocks; ties go to the larger penalty. The final
/// weights are refit on all rows at the chosen penalty.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, opts: &RidgeOptions) -> Result<RidgeFit> {
    let (n, width) = x.shape();
    if y.nrows() != n {
        return Err(Error::Shape(format!("design has {n} rows, targets have {}", y.nrows())));
    }
    if opts.inner_folds < 2 {
        return Err(Error::Invalid(format!("inner_folds must be at least 2, got {}", opts.inner_folds)));
    }
    if n < opts.inner_folds {
        return Err(Error::Invalid(format!("{n} training frames cannot form {} folds", opts.inner_folds)));
    }
    if width == 0 || y.ncols() == 0 {
        return Err(Error::Shape("empty design or target matrix".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite value in design or targets".into()));
    }

    let stats = column_stats(x, opts.standardize);
    let keep: Vec<usize> = (0..width).filter(|&j| stats.retained[j]).collect();
    if keep.is_empty() {
        return Err(Error::Invalid("every design column is constant".into()));
    }
    let z = DMatrix::from_fn(n, keep.len(), |i, c| {
        let j = keep[c];
        (x[(i, j)] - stats.means[j]) / stats.stds[j]
    });

    let intercepts: Vec<f64> = if opts.standardize {
        y.column_iter().map(|c| c.sum() / n as f64).collect()
    } else {
        vec![0.0; y.ncols()]
    };
    let grid = opts.grid.values();
    let center = opts.standardize;
    let path = RidgePath::new(z.clone())?;
    let primal = matches!(path.route, Route::Primal { .. });

    let folds: Vec<FoldOperator> = if grid.len() > 1 {
        let gram = mul_tn(&z, &z);
        contiguous_folds(n, opts.inner_folds)
            .into_par_iter()
            .map(|val| FoldOperator::build(&z, &gram, val, grid, center))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let chunks: Vec<Range<usize>> = (0..y.ncols())
        .step_by(TARGET_CHUNK)
        .map(|s| s.min(y.ncols())..(s + TARGET_CHUNK).min(y.ncols()))
        .collect();

    let solved: Vec<(DMatrix<f64>, Vec<f64>)> = chunks
        .into_par_iter()
        .map(|cols| {
            let mut yc = y.columns(cols.start, cols.len()).clone_owned();
            for (mut col, mu) in yc.column_iter_mut().zip(&intercepts[cols.clone()]) {
                col.add_scalar_mut(-mu);
            }
            solve_chunk(&path, &z, &folds, &yc, grid, center, primal)
        })
        .collect();

    let mut weights = DMatrix::zeros(width, y.ncols());
    let mut chosen_penalty = Vec::with_capacity(y.ncols());
    let mut col0 = 0;
    for (w, lams) in solved {
        for (r, &j) in keep.iter().enumerate() {
            weights.view_mut((j, col0), (1, w.ncols())).copy_from(&w.row(r));
        }
        col0 += w.ncols();
        chosen_penalty.extend(lams);
    }
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("ridge solution is not finite".into()));
    }
    Ok(RidgeFit {
        weights,
        chosen_penalty,
        column_means: stats.means,
        column_stds: stats.stds,
        retained: stats.retained,
        intercepts,
    })
}

/// Right-hand side of one inner fold, held transposed (`targets × rows`):
/// `Σ_train (y - ȳ) zᵀ` on the primal route, the centered training targets
/// on the dual route.
struct FoldRhs<'a> {
    fold: &'a FoldOperator,
    /// Transposed targets, `targets × frames`.
    yt: &'a DMatrix<f64>,
    /// Transposed cross products over all rows and over the validation block.
    cross_t: Option<(&'a DMatrix<f64>, &'a DMatrix<f64>)>,
    /// Validation-block column sums of the design; empty when not centering.
    z_block_sum: DVector<f64>,
    train_mean: RowDVector<f64>,
}

impl FoldRhs<'_> {
    fn rows(&self) -> usize {
        match self.cross_t {
            Some((all, _)) => all.ncols(),
            None => self.fold.train_rows.len(),
        }
    }

    /// Row `i` of the right-hand side for every target, through `put(j, value)`.
    fn fill_row(&self, i: usize, mut put: impl FnMut(usize, f64)) {
        let mean = self.train_mean.as_slice();
        match self.cross_t {
            Some((all, block)) => {
                // Σ_train y zᵀ - n_t ȳ mᵀ, with n_t m = -(block sum of z).
                let shift = if self.z_block_sum.is_empty() { 0.0 } else { self.z_block_sum[i] };
                let (a, b) = (all.column(i), block.column(i));
                for (j, ((&a, &b), &m)) in a.iter().zip(b.iter()).zip(mean).enumerate() {
                    put(j, a - b + shift * m);
                }
            }
            None => {
                let y = self.yt.column(self.fold.train_rows[i]);
                for (j, (&y, &m)) in y.iter().zip(mean).enumerate() {
                    put(j, y - m);
                }
            }
        }
    }

    /// `targets × rows`, single precision.
    fn transposed_f32(&self) -> DMatrix<f32> {
        let mut out = DMatrix::zeros(self.yt.nrows(), self.rows());
        for i in 0..out.ncols() {
            let mut col = out.column_mut(i);
            self.fill_row(i, |j, v| col[j] = v as f32);
        }
        out
    }

    /// `rows × cols.len()` for the selected targets, double precision.
    fn columns(&self, cols: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows(), cols.len());
        let mut row = vec![0.0; self.yt.nrows()];
        for i in 0..out.nrows() {
            self.fill_row(i, |j, v| row[j] = v);
            for (k, &j) in cols.iter().enumerate() {
                out[(i, k)] = row[j];
            }
        }
        out
    }
}

fn solve_chunk(
    path: &RidgePath,
    z: &DMatrix<f64>,
    folds: &[FoldOperator],
    yc: &DMatrix<f64>,
    grid: &[f64],
    center: bool,
    primal: bool,
) -> (DMatrix<f64>, Vec<f64>) {
    let c = yc.ncols();
    let yt = yc.transpose();
    let block_cross_t: Vec<DMatrix<f64>> = if primal {
        folds
            .iter()
            .map(|f| mul_ref(rows(yc, f.val.start, f.val.len()).transpose(), rows(z, f.val.start, f.val.len())))
            .collect()
    } else {
        Vec::new()
    };
    let cross_all_t: Option<DMatrix<f64>> = if primal && !folds.is_empty() {
        let mut sum = DMatrix::zeros(c, z.ncols());
        for h in &block_cross_t {
            sum += h;
        }
        Some(sum)
    } else {
        None
    };

    let chosen: Vec<f64> = if folds.is_empty() {
        vec![grid[0]; c]
    } else {
        let col_sums = yc.row_sum();
        let rhs: Vec<FoldRhs> = folds
            .iter()
            .enumerate()
            .map(|(fi, fold)| {
                let n_val = fold.val.len();
                let train_mean = if center && fold.n_train > 0 {
                    (&col_sums - yc.rows(fold.val.start, n_val).row_sum()) / fold.n_train as f64
                } else {
                    RowDVector::zeros(c)
                };
                let z_block_sum = if primal && center {
                    z.rows(fold.val.start, n_val).row_sum().transpose()
                } else {
                    DVector::zeros(0)
                };
                FoldRhs {
                    fold,
                    yt: &yt,
                    cross_t: cross_all_t.as_ref().map(|all| (all, &block_cross_t[fi])),
                    z_block_sum,
                    train_mean,
                }
            })
            .collect();

        // Screen every target in single precision, then redo in double
        // precision the penalties still in contention for each target.
        // Targets run along rows here so the error loop is contiguous.
        let mut err_t = DMatrix::<f64>::zeros(c, grid.len());
        for r in &rhs {
            let pred = mul_f32(&r.transposed_f32(), &r.fold.screen);
            add_screen_errors(&mut err_t, &pred, &yt, r.fold, &r.train_mean);
        }
        let mut err = err_t.transpose();
        let mut per_penalty: Vec<Vec<usize>> = vec![Vec::new(); grid.len()];
        let mut unclear = Vec::new();
        for j in 0..c {
            let open = contenders(err.column(j).as_slice());
            if open.len() > 1 {
                for &l in &open {
                    per_penalty[l].push(j);
                }
                unclear.push(j);
            }
        }
        let mut exact = DMatrix::from_element(grid.len(), c, f64::INFINITY);
        for (l, cols) in per_penalty.iter().enumerate().filter(|(_, cols)| !cols.is_empty()) {
            let mut sse = vec![0.0; cols.len()];
            for r in &rhs {
                let n_val = r.fold.val.len();
                let h = r.columns(cols);
                let pred = mul_ref(rows(&r.fold.stacked, l * n_val, n_val), rows(&h, 0, h.nrows()));
                for (k, &j) in cols.iter().enumerate() {
                    let ycol = yc.column(j);
                    let y = &ycol.as_slice()[r.fold.val.clone()];
                    let pcol = pred.column(k);
                    sse[k] += fold_mse(y, r.train_mean[j], pcol.as_slice());
                }
            }
            for (k, &j) in cols.iter().enumerate() {
                exact[(l, j)] = sse[k];
            }
        }
        for j in unclear {
            err.set_column(j, &exact.column(j));
        }
        (0..c).map(|j| grid[best_penalty(err.column(j).as_slice())]).collect()
    };

    let weights = path.weights_per_target(yc, cross_all_t.as_ref(), &chosen);
    (weights, chosen)
}

/// Relative margin within which single-precision validation errors are
/// treated as tied and recomputed in double precision.
const SCREEN_MARGIN: f64 = 1e-5;

fn fold_mse(y: &[f64], train_mean: f64, pred: &[f64]) -> f64 {
    let mut sse = 0.0;
    for (&yv, &p) in y.iter().zip(pred) {
        let resid = yv - train_mean - p;
        sse += resid * resid;
    }
    sse / y.len() as f64
}

/// Adds one fold's mean squared validation error for every target and
/// penalty. `pred` is `targets × (penalties·n_val)` and `yt` is the
/// transposed target block.
fn add_screen_errors(
    err_t: &mut DMatrix<f64>,
    pred: &DMatrix<f32>,
    yt: &DMatrix<f64>,
    fold: &FoldOperator,
    train_mean: &RowDVector<f64>,
) {
    let n_val = fold.val.len();
    let mean = train_mean.as_slice();
    let mut sse = vec![0.0; yt.nrows()];
    for l in 0..err_t.ncols() {
        sse.fill(0.0);
        for r in 0..n_val {
            let p = pred.column(l * n_val + r);
            let y = yt.column(fold.val.start + r);
            for (((s, &yv), &m), &pv) in sse.iter_mut().zip(y.as_slice()).zip(mean).zip(p.as_slice()) {
                let resid = yv - m - f64::from(pv);
                *s += resid * resid;
            }
        }
        for (e, s) in err_t.column_mut(l).iter_mut().zip(&sse) {
            *e += s / n_val as f64;
        }
    }
}

/// Index of the smallest error; ties go to the larger penalty.
fn best_penalty(err: &[f64]) -> usize {
    let mut best = err.len() - 1;
    for l in (0..err.len() - 1).rev() {
        if err[l] < err[best] {
            best = l;
        }
    }
    best
}

/// Penalties whose screened error is within the margin of the best; every
/// penalty when any error is not finite.
fn contenders(err: &[f64]) -> Vec<usize> {
    if err.iter().any(|e| !e.is_finite()) {
        return (0..err.len()).collect();
    }
    let best = err[best_penalty(err)];
    let margin = SCREEN_MARGIN * best.abs().max(f64::MIN_POSITIVE);
    (0..err.len()).filter(|&l| err[l] - best <= margin).collect()
}

/// Direct dense solve of `(XᵀX + λI) w = Xᵀy`. Test oracle for small systems.
pub fn closed_form_oracle(x: &DMatrix<f64>, y: &DVector<f64>, penalty: f64) -> Result<DVector<f64>> {
    if x.ncols() > 64 {
        return Err(Error::Invalid(format!("oracle is limited to 64 columns, got {}", x.ncols())));
    }
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows vs {} targets", x.nrows(), y.len())));
    }
    let p = x.ncols();
    let mut a = x.transpose() * x;
    for i in 0..p {
        a[(i, i)] += penalty;
    }
    let rhs = x.transpose() * y;
    a.lu()
        .solve(&rhs)
        .filter(|w| w.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("singular normal equations".into()))
}
