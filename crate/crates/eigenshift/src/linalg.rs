//! Dense real linear algebra: thin SVD, matrix products, Frobenius norms,
//! orthonormality checks.
//!
//! Every operation uses a fixed summation order, so results are
//! bit-reproducible across runs for identical input bytes.

// Kernels index several buffers by one loop variable; iterator forms
// would obscure the lockstep access.
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Mutable views of two distinct rows at once.
    fn two_rows_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        assert!(p < q, "row indices must be ordered and distinct");
        let (head, tail) = self.data.split_at_mut(q * self.cols);
        (
            &mut head[p * self.cols..(p + 1) * self.cols],
            &mut tail[..self.cols],
        )
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        sum_squares(&self.data).sqrt()
    }

    /// Column `j` copied into a fresh vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

/// Dot product with a fixed four-way unrolled summation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = i * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in chunks * 4..a.len() {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

#[inline]
fn sum_squares(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Standard product with deterministic accumulation (row-by-row, inner
/// index ascending), bit-reproducible across runs.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul inner dimensions disagree: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in orow.iter_mut().zip(brow.iter()) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `‖w − w_hat‖_F`: square root of the summed squared entrywise differences.
pub fn frobenius_loss(w: &Matrix, w_hat: &Matrix) -> Result<f64> {
    if w.rows != w_hat.rows || w.cols != w_hat.cols {
        return Err(Error::Shape(format!(
            "frobenius_loss shapes disagree: {}x{} vs {}x{}",
            w.rows, w.cols, w_hat.rows, w_hat.cols
        )));
    }
    let mut acc = [0.0f64; 4];
    let n = w.data.len();
    let chunks = n / 4;
    for i in 0..chunks {
        let k = i * 4;
        for lane in 0..4 {
            let d = w.data[k + lane] - w_hat.data[k + lane];
            acc[lane] += d * d;
        }
    }
    let mut tail = 0.0;
    for k in chunks * 4..n {
        let d = w.data[k] - w_hat.data[k];
        tail += d * d;
    }
    Ok((((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail).sqrt())
}

/// Max-abs deviation of `m·mᵀ` from the identity; 0 for exactly
/// orthonormal rows. For column orthonormality pass the transpose.
pub fn row_orthonormality_defect(m: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.rows {
        for j in i..m.rows {
            let g = dot(m.row(i), m.row(j));
            let target = if i == j { 1.0 } else { 0.0 };
            let dev = (g - target).abs();
            if dev > worst {
                worst = dev;
            }
        }
    }
    worst
}

/// Thin singular value decomposition `m = u · diag(sigma) · vt`.
///
/// `u` has orthonormal columns (rows×cols), `sigma` is non-negative and
/// non-increasing, `vt` has orthonormal rows (cols×cols). The sign
/// convention makes the largest-magnitude entry of each `u` column
/// positive. Construction by [`svd`] records the source matrix so an
/// unmodified spectrum reconstructs the original bytes exactly.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    u: Matrix,
    sigma: Vec<f64>,
    vt: Matrix,
    post_intervention: bool,
    provenance: Option<Provenance>,
}

#[derive(Clone, Debug)]
struct Provenance {
    source: Matrix,
    sigma_bits: Vec<u64>,
}

impl SvdFactors {
    /// Assemble factors directly (no provenance; used by tests and callers
    /// that build factors analytically).
    pub fn assemble(u: Matrix, sigma: Vec<f64>, vt: Matrix) -> Result<Self> {
        if u.cols != sigma.len() || vt.rows != sigma.len() || vt.cols < sigma.len() {
            return Err(Error::Shape(format!(
                "inconsistent factor shapes: u {}x{}, sigma {}, vt {}x{}",
                u.rows,
                u.cols,
                sigma.len(),
                vt.rows,
                vt.cols
            )));
        }
        Ok(SvdFactors {
            u,
            sigma,
            vt,
            post_intervention: false,
            provenance: None,
        })
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn vt(&self) -> &Matrix {
        &self.vt
    }

    /// Left factor: the orthonormal basis the decomposition writes logits in.
    pub fn basis(&self) -> &Matrix {
        &self.u
    }

    /// `diag(sigma)·vt`: right-direction rows scaled by their singular values.
    pub fn scaled_directions(&self) -> Matrix {
        let mut out = self.vt.clone();
        for (i, &s) in self.sigma.iter().enumerate() {
            for v in out.row_mut(i) {
                *v *= s;
            }
        }
        out
    }

    /// True once the spectrum has been edited; sortedness and
    /// non-negativity of `sigma` are no longer guaranteed.
    pub fn post_intervention(&self) -> bool {
        self.post_intervention
    }

    /// Copy of these factors with `sigma` replaced, marked post-intervention.
    pub fn with_sigma(&self, sigma: Vec<f64>) -> Result<SvdFactors> {
        if sigma.len() != self.sigma.len() {
            return Err(Error::Shape(format!(
                "sigma length {} does not match factor rank {}",
                sigma.len(),
                self.sigma.len()
            )));
        }
        Ok(SvdFactors {
            u: self.u.clone(),
            sigma,
            vt: self.vt.clone(),
            post_intervention: true,
            provenance: self.provenance.clone(),
        })
    }

    /// `u · diag(sigma) · vt`. If the spectrum is bitwise identical to the
    /// one produced at factorization time, returns the source matrix bytes
    /// exactly instead of multiplying back.
    pub fn reconstruct(&self) -> Matrix {
        if let Some(p) = &self.provenance {
            let unchanged = p.sigma_bits.len() == self.sigma.len()
                && p.sigma_bits
                    .iter()
                    .zip(self.sigma.iter())
                    .all(|(&bits, s)| bits == s.to_bits());
            if unchanged {
                return p.source.clone();
            }
        }
        let scaled = self.scaled_directions();
        matmul(&self.u, &scaled).expect("factor shapes are consistent by construction")
    }
}

const JACOBI_MAX_SWEEPS: usize = 60;
const JACOBI_TOL: f64 = 1e-14;

/// Thin SVD via one-sided Jacobi rotations. Tall inputs are first reduced
/// by a Householder QR factorization so the rotation phase runs on the
/// small square factor. Requires `rows ≥ cols ≥ 1`; callers transpose
/// wider-than-tall inputs.
pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    if m.rows < m.cols {
        return Err(Error::InvalidArgument(format!(
            "svd requires rows >= cols, got {}x{}; transpose the input",
            m.rows, m.cols
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input contains non-finite values".into()));
    }
    let n = m.cols;

    let (mut u, mut sigma, mut vt) = if m.rows > n {
        let (q, r) = householder_qr(m);
        let (ur, sigma, vt) = one_sided_jacobi(&r)?;
        (matmul(&q, &ur)?, sigma, vt)
    } else {
        one_sided_jacobi(m)?
    };

    // Sort by descending singular value, ties by original index.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let sorted_sigma: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    let mut sorted_u = Matrix::zeros(u.rows, n);
    for (jj, &src) in order.iter().enumerate() {
        for i in 0..u.rows {
            sorted_u.set(i, jj, u.get(i, src));
        }
    }
    let mut sorted_vt = Matrix::zeros(n, n);
    for (jj, &src) in order.iter().enumerate() {
        sorted_vt.row_mut(jj).copy_from_slice(vt.row(src));
    }
    u = sorted_u;
    sigma = sorted_sigma;
    vt = sorted_vt;

    complete_zero_columns(&mut u, &sigma);
    fix_signs(&mut u, &mut vt);

    let provenance = Provenance {
        source: m.clone(),
        sigma_bits: sigma.iter().map(|s| s.to_bits()).collect(),
    };
    Ok(SvdFactors {
        u,
        sigma,
        vt,
        post_intervention: false,
        provenance: Some(provenance),
    })
}

/// Householder QR of a tall matrix: `a = q · r` with `q` thin (rows×cols,
/// orthonormal columns) and `r` upper triangular (cols×cols).
fn householder_qr(a: &Matrix) -> (Matrix, Matrix) {
    let m = a.rows;
    let n = a.cols;
    // Work on the transpose so each column of `a` is a contiguous row.
    let mut at = a.transpose(); // n×m
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);

    for k in 0..n {
        let col = &at.row(k)[k..];
        let norm = sum_squares(col).sqrt();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if col[0] >= 0.0 { -norm } else { norm };
        let mut v = col.to_vec();
        v[0] -= alpha;
        let vnorm2 = sum_squares(&v);
        if vnorm2 == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for j in k..n {
            let rowj = &mut at.row_mut(j)[k..];
            let f = 2.0 * dot(&v, rowj) / vnorm2;
            for (r, &vi) in rowj.iter_mut().zip(v.iter()) {
                *r -= f * vi;
            }
        }
        reflectors.push(v);
    }

    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            r.set(i, j, at.get(j, i));
        }
    }

    // q = H_0 · H_1 · ... · H_{n−1} applied to the first n identity columns,
    // built on the transpose so each column is contiguous.
    let mut qt = Matrix::zeros(n, m);
    for j in 0..n {
        qt.set(j, j, 1.0);
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        let vnorm2 = sum_squares(v);
        for j in 0..n {
            let rowj = &mut qt.row_mut(j)[k..];
            let f = 2.0 * dot(v, rowj) / vnorm2;
            for (r, &vi) in rowj.iter_mut().zip(v.iter()) {
                *r -= f * vi;
            }
        }
    }
    (qt.transpose(), r)
}

/// One-sided Jacobi on `a` (rows ≥ cols): returns (`u`, `sigma`, `vt`) with
/// `u` rows×cols (zero columns where `sigma` is exactly 0), unsorted.
fn one_sided_jacobi(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let m = a.rows;
    let n = a.cols;
    // Work on transposes: row j of `bt` is column j of the rotating matrix.
    let mut bt = a.transpose(); // n×m
    let mut vt = Matrix::identity(n); // row j is column j of V, i.e. vt = Vᵀ

    if sum_squares(&bt.data) == 0.0 {
        return Ok((Matrix::zeros(m, n), vec![0.0; n], vt));
    }

    let mut converged = n == 1;
    let mut worst_ratio = 0.0f64;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut norms2: Vec<f64> = (0..n).map(|j| sum_squares(bt.row(j))).collect();
        let mut rotated = false;
        worst_ratio = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let app = norms2[p];
                let aqq = norms2[q];
                let denom = app.sqrt() * aqq.sqrt();
                if denom == 0.0 {
                    continue;
                }
                let apq = dot(bt.row(p), bt.row(q));
                let ratio = apq.abs() / denom;
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                }
                if ratio <= JACOBI_TOL {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut bt, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
                norms2[p] = (app - t * apq).max(0.0);
                norms2[q] = (aqq + t * apq).max(0.0);
                rotated = true;
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            sweeps: JACOBI_MAX_SWEEPS,
            residual: worst_ratio,
        });
    }

    let mut sigma = vec![0.0f64; n];
    let mut u = Matrix::zeros(m, n);
    for j in 0..n {
        let s = sum_squares(bt.row(j)).sqrt();
        sigma[j] = s;
        if s > 0.0 {
            let inv = 1.0 / s;
            for i in 0..m {
                u.set(i, j, bt.get(j, i) * inv);
            }
        }
    }
    Ok((u, sigma, vt))
}

/// Plane rotation of rows `p` and `q`: `(rp, rq) ← (c·rp − s·rq, s·rp + c·rq)`.
#[inline]
fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let (rp, rq) = m.two_rows_mut(p, q);
    for (a, b) in rp.iter_mut().zip(rq.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Replace columns whose singular value is exactly zero with orthonormal
/// completions, chosen deterministically by Gram-Schmidt over the
/// canonical basis.
fn complete_zero_columns(u: &mut Matrix, sigma: &[f64]) {
    let m = u.rows;
    let n = u.cols;
    let mut valid: Vec<bool> = sigma.iter().map(|&s| s != 0.0).collect();
    for j in 0..n {
        if valid[j] {
            continue;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..m {
            let mut w = vec![0.0f64; m];
            w[e] = 1.0;
            for _pass in 0..2 {
                for k in 0..n {
                    if !valid[k] {
                        continue;
                    }
                    let col: Vec<f64> = (0..m).map(|i| u.get(i, k)).collect();
                    let d = dot(&col, &w);
                    for i in 0..m {
                        w[i] -= d * col[i];
                    }
                }
            }
            let norm = sum_squares(&w).sqrt();
            if norm > 0.5 {
                best = Some((norm, w));
                break;
            }
            match &best {
                Some((b, _)) if *b >= norm => {}
                _ => best = Some((norm, w)),
            }
        }
        let (norm, mut w) = best.expect("canonical basis spans the column space");
        let inv = 1.0 / norm;
        for x in &mut w {
            *x *= inv;
        }
        // One more orthogonalization pass after normalizing, for hygiene
        // when the best residual was small.
        for k in 0..n {
            if !valid[k] {
                continue;
            }
            let col: Vec<f64> = (0..m).map(|i| u.get(i, k)).collect();
            let d = dot(&col, &w);
            for i in 0..m {
                w[i] -= d * col[i];
            }
        }
        let norm = sum_squares(&w).sqrt();
        let inv = 1.0 / norm;
        for (i, x) in w.iter().enumerate() {
            u.set(i, j, x * inv);
        }
        valid[j] = true;
    }
}

/// Make the largest-magnitude entry of each `u` column positive, flipping
/// the paired `vt` row to keep the product unchanged. The first of several
/// equal-magnitude entries decides.
fn fix_signs(u: &mut Matrix, vt: &mut Matrix) {
    for j in 0..u.cols {
        let mut arg = 0usize;
        let mut best = f64::NEG_INFINITY;
        for i in 0..u.rows {
            let a = u.get(i, j).abs();
            if a > best {
                best = a;
                arg = i;
            }
        }
        if u.get(arg, j) < 0.0 {
            for i in 0..u.rows {
                let v = u.get(i, j);
                u.set(i, j, -v);
            }
            for v in vt.row_mut(j) {
                *v = -*v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    fn assert_factor_contract(m: &Matrix, f: &SvdFactors, recon_rel: f64) {
        let recon = matmul(f.u(), &f.scaled_directions()).unwrap();
        let loss = frobenius_loss(m, &recon).unwrap();
        let scale = m.frobenius_norm().max(1.0);
        assert!(
            loss <= recon_rel * scale,
            "reconstruction loss {loss:.3e} over budget {:.3e}",
            recon_rel * scale
        );
        assert!(row_orthonormality_defect(&f.u().transpose()) <= 1e-8);
        assert!(row_orthonormality_defect(f.vt()) <= 1e-8);
        for w in f.sigma().windows(2) {
            assert!(w[0] >= w[1], "sigma not sorted: {:?}", f.sigma());
        }
        assert!(f.sigma().iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let m = Matrix::identity(3);
        let f = svd(&m).unwrap();
        for &s in f.sigma() {
            assert!((s - 1.0).abs() < 1e-14);
        }
        let prod = matmul(f.u(), f.vt()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get(i, j) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn diagonal_spectrum_is_sorted() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let f = svd(&m).unwrap();
        assert!((f.sigma()[0] - 3.0).abs() < 1e-14);
        assert!((f.sigma()[1] - 2.0).abs() < 1e-14);

        let m = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let f = svd(&m).unwrap();
        assert!((f.sigma()[0] - 3.0).abs() < 1e-14);
        assert!((f.sigma()[1] - 2.0).abs() < 1e-14);
        assert_factor_contract(&m, &f, 1e-14);
    }

    #[test]
    fn seeded_tall_reconstructs_tightly() {
        let m = random_matrix(64, 16, 11);
        let f = svd(&m).unwrap();
        assert_factor_contract(&m, &f, 1e-12);
    }

    #[test]
    fn square_and_edge_shapes() {
        for (rows, cols, seed) in [(16usize, 16usize, 3u64), (5, 2, 4), (5, 1, 5), (1, 1, 6)] {
            let m = random_matrix(rows, cols, seed);
            let f = svd(&m).unwrap();
            assert_factor_contract(&m, &f, 1e-12);
        }
    }

    #[test]
    fn rank_one_and_zero_inputs_complete_basis() {
        let mut m = Matrix::zeros(6, 3);
        for i in 0..6 {
            for j in 0..3 {
                m.set(i, j, (i as f64 + 1.0) * [2.0, -1.0, 0.5][j]);
            }
        }
        let f = svd(&m).unwrap();
        assert!(f.sigma()[0] > 0.0);
        assert!(f.sigma()[1].abs() < 1e-12 && f.sigma()[2].abs() < 1e-12);
        assert!(row_orthonormality_defect(&f.u().transpose()) <= 1e-10);

        let z = Matrix::zeros(4, 3);
        let f = svd(&z).unwrap();
        assert!(f.sigma().iter().all(|&s| s == 0.0));
        assert!(row_orthonormality_defect(&f.u().transpose()) <= 1e-12);
        assert!(row_orthonormality_defect(f.vt()) <= 1e-12);
    }

    #[test]
    fn negative_one_by_one() {
        let m = Matrix::new(1, 1, vec![-2.5]).unwrap();
        let f = svd(&m).unwrap();
        assert!((f.sigma()[0] - 2.5).abs() < 1e-15);
        assert!((f.reconstruct().get(0, 0) + 2.5).abs() < 1e-15);
        assert!(f.u().get(0, 0) > 0.0, "sign convention fixes u positive");
    }

    #[test]
    fn wide_input_rejected() {
        let m = random_matrix(2, 5, 7);
        assert!(matches!(svd(&m), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = Matrix::zeros(2, 2);
        m.set(0, 0, f64::NAN);
        assert!(matches!(svd(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn deterministic_bytes() {
        let m = random_matrix(40, 12, 21);
        let a = svd(&m).unwrap();
        let b = svd(&m).unwrap();
        assert_eq!(
            a.u().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.u().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(
            a.sigma().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.sigma().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(
            a.vt().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.vt().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn sign_convention_held() {
        let m = random_matrix(30, 8, 33);
        let f = svd(&m).unwrap();
        for j in 0..8 {
            let col = f.u().column(j);
            let mut arg = 0;
            let mut best = f64::NEG_INFINITY;
            for (i, v) in col.iter().enumerate() {
                if v.abs() > best {
                    best = v.abs();
                    arg = i;
                }
            }
            assert!(col[arg] > 0.0, "column {j} max entry not positive");
        }
    }

    #[test]
    fn reconstruct_short_circuits_to_source_bytes() {
        let m = random_matrix(20, 6, 9);
        let f = svd(&m).unwrap();
        let r = f.reconstruct();
        assert_eq!(
            m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            r.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let damped = f.with_sigma(f.sigma().iter().map(|s| s * 0.5).collect()).unwrap();
        let r2 = damped.reconstruct();
        let loss = frobenius_loss(&m, &r2).unwrap();
        assert!(loss > 0.0, "edited spectrum must change the product");
        assert!(damped.post_intervention());
    }

    #[test]
    fn matmul_matches_naive_oracle_exactly() {
        let a = random_matrix(16, 16, 41);
        let b = random_matrix(16, 16, 42);
        let fast = matmul(&a, &b).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let mut acc = 0.0;
                for k in 0..16 {
                    acc += a.get(i, k) * b.get(k, j);
                }
                assert_eq!(acc.to_bits(), fast.get(i, j).to_bits());
            }
        }
    }

    #[test]
    fn matmul_identity_and_tiny_case() {
        let b = random_matrix(4, 3, 50);
        let prod = matmul(&Matrix::identity(4), &b).unwrap();
        assert_eq!(prod, b);

        let a = Matrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let c = Matrix::new(2, 1, vec![3.0, 4.0]).unwrap();
        assert_eq!(matmul(&a, &c).unwrap().get(0, 0), 11.0);

        let bad = matmul(&a, &b);
        assert!(matches!(bad, Err(Error::Shape(_))));
    }

    #[test]
    fn frobenius_loss_cases() {
        let a = random_matrix(32, 8, 60);
        assert_eq!(frobenius_loss(&a, &a).unwrap(), 0.0);

        let i2 = Matrix::identity(2);
        let z2 = Matrix::zeros(2, 2);
        assert!((frobenius_loss(&i2, &z2).unwrap() - 2f64.sqrt()).abs() < 1e-15);

        let b = random_matrix(32, 8, 61);
        let mut brute = 0.0;
        for i in 0..32 {
            for j in 0..8 {
                let d = a.get(i, j) - b.get(i, j);
                brute += d * d;
            }
        }
        let brute = brute.sqrt();
        let fast = frobenius_loss(&a, &b).unwrap();
        assert!((brute - fast).abs() <= 1e-12 * brute.max(1.0));
    }

    #[test]
    fn spectrum_idempotent_under_refactorization() {
        let m = random_matrix(48, 12, 70);
        let f = svd(&m).unwrap();
        let recon = matmul(f.u(), &f.scaled_directions()).unwrap();
        let f2 = svd(&recon).unwrap();
        for (a, b) in f.sigma().iter().zip(f2.sigma().iter()) {
            assert!((a - b).abs() <= 1e-9 * f.sigma()[0].max(1.0));
        }
    }
}
