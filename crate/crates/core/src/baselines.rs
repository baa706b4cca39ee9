//! Classical forward-regression baselines: the outer-product-gradient (OPG)
//! estimator via local linear weighted least squares, the MAVE estimator via
//! alternating minimization with polar retraction, and kernel-smoothing
//! prediction on the reduced data.
//!
//! Both estimators standardize the predictors internally (per coordinate)
//! and map the estimated basis back to the original scale. Bandwidths follow
//! the nonparametric rate `h = c * n^(-1/(4+k))` on the standardized scale.
//!
//! `opg_fit` iterates: a first full-space pass is followed by passes whose
//! kernel weights are computed on the current reduced coordinates, with the
//! weighting dimension annealed down to `k` and the bandwidth shrunk along a
//! fixed ladder. Several deterministic starts (two anneal schedules, a
//! second-moment start, an OLS hybrid start) are compared by the MAVE
//! objective at the final bandwidth and the best is returned. A single
//! unrefined pass is far too variance-dominated for moderate `p`; the
//! iteration is what makes the estimator usable at `n = 200, p = 20`.

use crate::dataset::{DataSet, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{
    dot, eigen_sym, polar_retract, solve_spd, Matrix, StiefelMatrix, SymEigen,
};

/// Kernel and bandwidth settings shared by the baselines.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelConfig {
    /// The constant `c` in `h = c * n^(-1/(4+k))`.
    pub bandwidth_multiplier: f64,
    /// Exponent dimension; `None` uses the target dimension `k`. Setting it
    /// to `p` recovers the classical full-dimensional OPG bandwidth rate.
    pub exponent_dim: Option<usize>,
    /// Relative ridge added to the slope block of each local system
    /// (scaled by the block's mean diagonal).
    pub ridge: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth_multiplier: 2.34,
            exponent_dim: None,
            ridge: 1e-8,
        }
    }
}

impl KernelConfig {
    pub fn bandwidth(&self, n: usize, k: usize) -> f64 {
        let e = self.exponent_dim.unwrap_or(k) as f64;
        self.bandwidth_multiplier * (n as f64).powf(-1.0 / (4.0 + e))
    }
}

/// Local linear fits anchored at every sample point.
#[derive(Debug, Clone)]
pub struct LocalLinearFit {
    /// Local intercept at each anchor.
    pub intercepts: Vec<f64>,
    /// Local slope at each anchor (`n x d`).
    pub slopes: Matrix,
    /// Anchors whose local system stayed singular even with the ridge;
    /// their slope was set to zero.
    pub degenerate_anchors: usize,
    /// Mean over anchors of the weighted residual sum of squares — the
    /// estimate of the MAVE objective `T_n` at these coordinates.
    pub objective: f64,
}

/// Result of the MAVE alternating minimization.
#[derive(Debug, Clone)]
pub struct MaveFit {
    pub b_hat: StiefelMatrix,
    pub iterations_used: usize,
    /// Objective after the initial fit and after each accepted iteration,
    /// evaluated at that iteration's bandwidth.
    pub objective_trace: Vec<f64>,
    /// False when the loop stopped because an iteration was rejected
    /// (objective increase) or the iteration budget ran out.
    pub converged: bool,
}

/// Normalized Gaussian kernel weights around sample `anchor`:
/// `w_i = K((z_i - z_anchor)/h) / sum_l K((z_l - z_anchor)/h)` with
/// `K(u) = exp(-||u||^2 / 2)`.
pub fn kernel_weights(z: &Matrix, anchor: usize, h: f64) -> Result<Vec<f64>> {
    if h <= 0.0 {
        return Err(Error::contract("bandwidth must be positive"));
    }
    kernel_weights_at(z, z.row(anchor).to_vec().as_slice(), h)
}

fn kernel_weights_at(z: &Matrix, center: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = z.rows();
    let mut w = Vec::with_capacity(n);
    let inv = 1.0 / (2.0 * h * h);
    for i in 0..n {
        let mut d2 = 0.0;
        for (a, b) in z.row(i).iter().zip(center) {
            let d = a - b;
            d2 += d * d;
        }
        w.push((-d2 * inv).exp());
    }
    let total: f64 = w.iter().sum();
    if total < 1e-300 {
        return Err(Error::DegenerateNeighborhood(format!(
            "kernel mass underflowed at bandwidth {h}; increase the bandwidth"
        )));
    }
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

/// Weighted least squares of `y` on `[1, z - center]`, with ridge on the
/// slope block. Returns (intercept, slopes, weighted SSE, degenerate flag).
fn wls_at(
    z: &Matrix,
    y: &[f64],
    center: &[f64],
    weights: &[f64],
    ridge: f64,
) -> (f64, Vec<f64>, f64, bool) {
    let (n, d) = (z.rows(), z.cols());
    let dim = d + 1;
    let mut a = Matrix::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    let mut xi = vec![0.0; dim];
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        xi[0] = 1.0;
        for (t, (zv, c)) in z.row(i).iter().zip(center).enumerate() {
            xi[t + 1] = zv - c;
        }
        for r in 0..dim {
            let wr = w * xi[r];
            rhs[r] += wr * y[i];
            let row = a.row_mut(r);
            for (c, x) in xi.iter().enumerate() {
                row[c] += wr * x;
            }
        }
    }
    // Trace-scaled ridge on the slope block keeps near-singular local
    // systems solvable without biasing well-posed ones. A zero-trace slope
    // block carries no local information at all, so it is flagged rather
    // than "solved" through the ridge.
    let slope_trace: f64 = (1..dim).map(|i| a.get(i, i)).sum();
    let lambda = ridge * (slope_trace / d as f64).max(f64::MIN_POSITIVE);
    for i in 1..dim {
        a.set(i, i, a.get(i, i) + lambda);
    }
    let solved = if slope_trace > 0.0 {
        solve_spd(&a, &rhs).ok()
    } else {
        None
    };
    let (intercept, slopes, degenerate) = match solved {
        Some(beta) => (beta[0], beta[1..].to_vec(), false),
        None => {
            // Weighted mean fallback; weights sum to 1.
            let mean = dot(weights, y);
            (mean, vec![0.0; d], true)
        }
    };
    let mut wsse = 0.0;
    for i in 0..n {
        if weights[i] == 0.0 {
            continue;
        }
        let mut fit = intercept;
        for (t, (zv, c)) in z.row(i).iter().zip(center).enumerate() {
            fit += slopes[t] * (zv - c);
        }
        let r = y[i] - fit;
        wsse += weights[i] * r * r;
    }
    (intercept, slopes, wsse, degenerate)
}

/// Local linear fits anchored at every sample of `z`.
pub fn local_linear(y: &[f64], z: &Matrix, h: f64, ridge: f64) -> Result<LocalLinearFit> {
    let (n, d) = (z.rows(), z.cols());
    if y.len() != n {
        return Err(Error::contract("response length does not match z"));
    }
    if n <= d + 1 {
        return Err(Error::contract(format!(
            "local linear needs n > d+1, got n={n}, d={d}"
        )));
    }
    let mut intercepts = Vec::with_capacity(n);
    let mut slopes = Matrix::zeros(n, d);
    let mut degenerate = 0;
    let mut total = 0.0;
    for j in 0..n {
        let w = kernel_weights(z, j, h)?;
        let (a, b, wsse, bad) = wls_at(z, y, z.row(j).to_vec().as_slice(), &w, ridge);
        intercepts.push(a);
        slopes.row_mut(j).copy_from_slice(&b);
        if bad {
            degenerate += 1;
        }
        total += wsse;
    }
    Ok(LocalLinearFit {
        intercepts,
        slopes,
        degenerate_anchors: degenerate,
        objective: total / n as f64,
    })
}

/// The sample MAVE objective `T_n(V)` on already-reduced coordinates.
pub fn mave_objective(y: &[f64], z_reduced: &Matrix, h: f64, ridge: f64) -> Result<f64> {
    Ok(local_linear(y, z_reduced, h, ridge)?.objective)
}

/// One gradient-field pass: kernel weights on `weight_coords`, local linear
/// fits in the full standardized space, eigendecomposition of the averaged
/// outer product of the slopes.
fn opg_pass(
    z: &Matrix,
    y: &[f64],
    weight_coords: &Matrix,
    h: f64,
    ridge: f64,
) -> Result<SymEigen> {
    let (n, p) = (z.rows(), z.cols());
    let mut sigma = Matrix::zeros(p, p);
    for j in 0..n {
        let w = kernel_weights(weight_coords, j, h)?;
        let (_, b, _, _) = wls_at(z, y, z.row(j).to_vec().as_slice(), &w, ridge);
        for r in 0..p {
            if b[r] == 0.0 {
                continue;
            }
            let br = b[r];
            let row = sigma.row_mut(r);
            for (c, bc) in b.iter().enumerate() {
                row[c] += br * bc;
            }
        }
    }
    sigma.scale(1.0 / n as f64);
    eigen_sym(&sigma)
}

/// Columns `0..d` of an eigenvector matrix as a weighting basis.
fn leading_columns(vectors: &Matrix, d: usize) -> Matrix {
    Matrix::from_fn(vectors.rows(), d, |i, j| vectors.get(i, j))
}

/// Second-moment start: top-|eigenvalue| directions of the response-weighted
/// predictor covariance (principal-Hessian flavored; exact for even links).
fn second_moment_start(z: &Matrix, y: &[f64], k: usize) -> Result<Matrix> {
    let (n, p) = (z.rows(), z.cols());
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut m = Matrix::zeros(p, p);
    for i in 0..n {
        let yc = y[i] - ybar;
        let row = z.row(i);
        for r in 0..p {
            let f = yc * row[r];
            let dst = m.row_mut(r);
            for (c, v) in row.iter().enumerate() {
                dst[c] += f * v;
            }
        }
    }
    m.scale(1.0 / n as f64);
    let e = eigen_sym(&m)?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| e.values[b].abs().partial_cmp(&e.values[a].abs()).unwrap());
    Ok(Matrix::from_fn(p, k, |i, j| e.vectors.get(i, order[j])))
}

/// OLS slope direction completed with second-moment directions.
fn ols_hybrid_start(z: &Matrix, y: &[f64], k: usize) -> Result<Matrix> {
    let (n, p) = (z.rows(), z.cols());
    let uniform = vec![1.0 / n as f64; n];
    let center = vec![0.0; p];
    let (_, slope, _, _) = wls_at(z, y, &center, &uniform, 1e-10);
    let norm = dot(&slope, &slope).sqrt();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    if norm > 1e-12 {
        cols.push(slope.iter().map(|v| v / norm).collect());
    }
    let pool = second_moment_start(z, y, k.min(p))?;
    let mut pool_idx = 0;
    let mut basis_idx = 0;
    while cols.len() < k {
        let mut cand: Vec<f64> = if pool_idx < pool.cols() {
            let c = pool.column(pool_idx);
            pool_idx += 1;
            c
        } else {
            let mut e = vec![0.0; p];
            e[basis_idx % p] = 1.0;
            basis_idx += 1;
            e
        };
        for existing in &cols {
            let proj = dot(&cand, existing);
            for (c, e) in cand.iter_mut().zip(existing) {
                *c -= proj * e;
            }
        }
        let nrm = dot(&cand, &cand).sqrt();
        if nrm > 1e-8 {
            cols.push(cand.iter().map(|v| v / nrm).collect());
        }
    }
    Ok(Matrix::from_fn(p, k, |i, j| cols[j][i]))
}

/// Bandwidth ladder applied after the weight subspace has settled.
const TAIL_MULTIPLIERS: [f64; 5] = [0.85, 0.72, 0.6, 0.52, 0.52];

/// The outer-product-gradient estimator; also returns the eigenvalues of the
/// plain single-pass gradient matrix (full-space weights at `h = c * n^(-1/(4+e))`),
/// which is the spectrum diagnostics should look at.
pub fn opg_fit_full(data: &DataSet, k: usize, kcfg: &KernelConfig) -> Result<(StiefelMatrix, Vec<f64>)> {
    let (n, p) = (data.n(), data.p());
    if k < 1 || k >= p {
        return Err(Error::contract(format!("need 1 <= k < p, got k={k}, p={p}")));
    }
    if n <= p + 1 {
        return Err(Error::contract(format!(
            "opg_fit needs n > p+1, got n={n}, p={p}"
        )));
    }
    let std = Standardizer::fit(data.x());
    let z = std.transform(data.x());
    let y = data.y();
    let hb = kcfg.bandwidth(n, k);
    let ridge = kcfg.ridge;

    // Canonical single-pass spectrum.
    let canonical = opg_pass(&z, y, &z, hb, ridge)?;

    // Shared wide-bandwidth first pass.
    let dim_scale = |d: usize| (d as f64 / k as f64).sqrt();
    let first = opg_pass(&z, y, &z, hb * dim_scale(p), ridge)?;

    let anneal_fast = [p / 2, p / 4, (p + 7) / 8, k, k, k];
    let anneal_slow = [3 * p / 4, p / 2, p / 4, p / 8, k, k, k, k];

    let mut candidates: Vec<Matrix> = Vec::new();
    for schedule in [&anneal_fast[..], &anneal_slow[..]] {
        let mut vectors = first.vectors.clone();
        for &d_raw in schedule {
            let d = d_raw.max(k);
            let basis = leading_columns(&vectors, d);
            vectors = opg_pass(&z, y, &z.matmul(&basis), hb * dim_scale(d), ridge)?.vectors;
        }
        let mut v = leading_columns(&vectors, k);
        for mult in TAIL_MULTIPLIERS {
            let e = opg_pass(&z, y, &z.matmul(&v), hb * mult, ridge)?;
            v = leading_columns(&e.vectors, k);
        }
        candidates.push(v);
    }
    for start in [second_moment_start(&z, y, k)?, ols_hybrid_start(&z, y, k)?] {
        let mut v = start;
        for _ in 0..3 {
            v = leading_columns(&opg_pass(&z, y, &z.matmul(&v), hb, ridge)?.vectors, k);
        }
        for mult in TAIL_MULTIPLIERS {
            let e = opg_pass(&z, y, &z.matmul(&v), hb * mult, ridge)?;
            v = leading_columns(&e.vectors, k);
        }
        candidates.push(v);
    }

    let h_sel = hb * TAIL_MULTIPLIERS[TAIL_MULTIPLIERS.len() - 1];
    let mut best: Option<(f64, Matrix)> = None;
    for v in candidates {
        let obj = mave_objective(y, &z.matmul(&v), h_sel, ridge)?;
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, v));
        }
    }
    let (_, v) = best.expect("at least one candidate");
    let b_hat = polar_retract(&std.back_map_basis(&v))?;
    Ok((b_hat, canonical.values))
}

/// The OPG estimator for the mean subspace.
pub fn opg_fit(data: &DataSet, k: usize, kcfg: &KernelConfig) -> Result<StiefelMatrix> {
    opg_fit_full(data, k, kcfg).map(|(b, _)| b)
}

/// MAVE: alternating minimization of the averaged local conditional
/// variance over the Stiefel manifold, started from `init` (typically the
/// OPG estimate). The bandwidth shrinks along a fixed ladder; each
/// iteration's candidate is accepted only if it does not increase the
/// objective at the current bandwidth.
pub fn mave_fit(
    data: &DataSet,
    k: usize,
    kcfg: &KernelConfig,
    init: &StiefelMatrix,
    max_iters: usize,
    tol: f64,
) -> Result<MaveFit> {
    let (n, p) = (data.n(), data.p());
    if init.p() != p || init.k() != k {
        return Err(Error::contract("init dimensions do not match data and k"));
    }
    if n <= k + 1 {
        return Err(Error::contract("mave_fit needs n > k+1"));
    }
    let std = Standardizer::fit(data.x());
    let z = std.transform(data.x());
    let y = data.y();
    let hb = kcfg.bandwidth(n, k);
    let ridge = kcfg.ridge;

    let ladder = |t: usize| -> f64 {
        const MULTS: [f64; 6] = [1.0, 0.85, 0.72, 0.6, 0.52, 0.52];
        hb * MULTS[t.min(MULTS.len() - 1)]
    };
    let at_floor = |t: usize| t >= 4;

    // Map the init into standardized coordinates.
    let mut v = polar_retract(&std.forward_map_basis(init.matrix()))?.into_matrix();

    let mut trace: Vec<f64> = Vec::new();
    let mut iterations_used = 0;
    let mut converged = false;

    for t in 0..max_iters {
        let h = ladder(t);
        let reduced = z.matmul(&v);
        let fit = local_linear(y, &reduced, h, ridge)?;
        let baseline = fit.objective;
        if t == 0 {
            trace.push(baseline);
        }

        let cand = mave_v_step(&z, y, &reduced, &fit, h)
            .ok()
            .and_then(|m| polar_retract(&m).ok().map(StiefelMatrix::into_matrix));
        let accepted = match cand {
            Some(cand) => {
                let cand_obj = mave_objective(y, &z.matmul(&cand), h, ridge)?;
                if cand_obj > baseline + 1e-10 * (1.0 + baseline.abs()) {
                    None
                } else {
                    Some((cand, cand_obj))
                }
            }
            None => None,
        };
        match accepted {
            Some((cand, cand_obj)) => {
                let rel_dec = (baseline - cand_obj) / baseline.abs().max(f64::MIN_POSITIVE);
                trace.push(cand_obj);
                v = cand;
                iterations_used += 1;
                if at_floor(t) && rel_dec < tol {
                    converged = true;
                    break;
                }
            }
            // A rejected step before the bandwidth floor just moves the
            // ladder on; at the floor it ends the fit with the previous V.
            None => {
                if at_floor(t) {
                    break;
                }
            }
        }
    }

    let b_hat = polar_retract(&std.back_map_basis(&v))?;
    Ok(MaveFit {
        b_hat,
        iterations_used,
        objective_trace: trace,
        converged,
    })
}

/// Minimize the MAVE quadratic over unconstrained `V` for fixed local fits:
/// stacked normal equations of size `p*k` (column-stacked `vec(V)`).
fn mave_v_step(
    z: &Matrix,
    y: &[f64],
    reduced: &Matrix,
    fit: &LocalLinearFit,
    h: f64,
) -> Result<Matrix> {
    let (n, p) = (z.rows(), z.cols());
    let k = reduced.cols();
    let dim = p * k;
    let mut a = Matrix::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    let mut scatter = Matrix::zeros(p, p);
    let mut moment = vec![0.0; p];

    for j in 0..n {
        let w = kernel_weights(reduced, j, h)?;
        scatter.scale(0.0);
        moment.iter_mut().for_each(|m| *m = 0.0);
        let zj = z.row(j).to_vec();
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            let wi = w[i];
            let resid = y[i] - fit.intercepts[j];
            let zi = z.row(i);
            for r in 0..p {
                let dr = zi[r] - zj[r];
                moment[r] += wi * resid * dr;
                let wd = wi * dr;
                let row = scatter.row_mut(r);
                for c in r..p {
                    row[c] += wd * (zi[c] - zj[c]);
                }
            }
        }
        for r in 0..p {
            for c in (r + 1)..p {
                scatter.set(c, r, scatter.get(r, c));
            }
        }
        let bj = fit.slopes.row(j).to_vec();
        for ca in 0..k {
            for cb in 0..k {
                let f = bj[ca] * bj[cb];
                if f == 0.0 {
                    continue;
                }
                for r in 0..p {
                    let dst = a.row_mut(ca * p + r);
                    let src = scatter.row(r);
                    for c in 0..p {
                        dst[cb * p + c] += f * src[c];
                    }
                }
            }
            for r in 0..p {
                rhs[ca * p + r] += bj[ca] * moment[r];
            }
        }
    }

    let lambda = 1e-10 * (a.trace() / dim as f64).max(f64::MIN_POSITIVE);
    for i in 0..dim {
        a.set(i, i, a.get(i, i) + lambda);
    }
    let vflat = solve_spd(&a, &rhs)?;
    Ok(Matrix::from_fn(p, k, |i, col| vflat[col * p + i]))
}

/// Local linear prediction at `x_new` on the reduced coordinates
/// `z_i = b_hat' x_i`, with a weighted-mean fallback when the neighborhood
/// degenerates.
pub fn reduced_predict(
    train: &DataSet,
    b_hat: &StiefelMatrix,
    x_new: &[f64],
    kcfg: &KernelConfig,
) -> Result<f64> {
    if x_new.len() != train.p() || b_hat.p() != train.p() {
        return Err(Error::contract("dimension mismatch in reduced_predict"));
    }
    let z = reduce_rows(train.x(), b_hat);
    let z_new: Vec<f64> = b_hat.matrix().tr_matvec(x_new);
    reduced_predict_at(&z, train.y(), &z_new, kcfg)
}

/// [`reduced_predict`] on already-reduced training coordinates.
pub fn reduced_predict_at(
    z: &Matrix,
    y: &[f64],
    z_new: &[f64],
    kcfg: &KernelConfig,
) -> Result<f64> {
    let (n, k) = (z.rows(), z.cols());
    if z_new.len() != k || y.len() != n {
        return Err(Error::contract("dimension mismatch in reduced_predict_at"));
    }
    // Scale the rate bandwidth by the average spread of the reduced data,
    // at the same final multiplier the fitting ladder bottoms out at
    // (function estimation wants a tighter kernel than the slope passes).
    let mut scale = 0.0;
    for j in 0..k {
        let col = z.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (n as f64 - 1.0).max(1.0);
        scale += var.sqrt();
    }
    scale /= k as f64;
    let h = kcfg.bandwidth(n, k) * TAIL_MULTIPLIERS[TAIL_MULTIPLIERS.len() - 1] * scale.max(1e-12);

    let ybar = y.iter().sum::<f64>() / n as f64;
    let weights = match kernel_weights_at(z, z_new, h) {
        Ok(w) => w,
        Err(Error::DegenerateNeighborhood(_)) => return Ok(ybar),
        Err(e) => return Err(e),
    };
    let (intercept, _, _, degenerate) = wls_at(z, y, z_new, &weights, kcfg.ridge);
    if degenerate {
        return Ok(dot(&weights, y));
    }
    Ok(intercept)
}

/// Reduced coordinates `X * b_hat` for every training row.
pub fn reduce_rows(x: &Matrix, b_hat: &StiefelMatrix) -> Matrix {
    x.matmul(b_hat.matrix())
}
