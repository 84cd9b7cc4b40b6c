//! Self-tuning diffusion maps and the diffusion distance.
//!
//! The pipeline follows the classic construction: a Gaussian affinity with
//! per-point bandwidths set by the k-th nearest-neighbor distance,
//! K(x, y) = exp(-||x - y||^2 / (sigma_x sigma_y)), a density-correcting
//! renormalization K~ = K / (q_i^alpha q_j^alpha), and the row-stochastic
//! operator P = D~^-1 K~. Eigenpairs are obtained through the symmetric
//! conjugate S = D~^-1/2 K~ D~^-1/2, whose spectrum coincides with P's.
//!
//! Coordinates are the eigenvalue-scaled right eigenvectors
//! psi_j(x_i) = lambda_j^t V_ij, with V normalized so that
//! <psi_j, psi_j>_phi0 = 1 against the stationary distribution. Under that
//! normalization the Euclidean distance between coordinate vectors equals
//! the diffusion distance
//!
//!   D_t(x, y)^2 = sum_z (p_t(x, z) - p_t(y, z))^2 / phi0(z),
//!
//! where p_t(x, z) is the t-step transition probability from x to z.
//! Out-of-sample points are projected by a Nystrom extension: one transition
//! step through the training kernel followed by (t-1)-power scaling, so an
//! exact training point reproduces its stored coordinates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this size the dense eigensolver is replaced by subspace iteration.
const DENSE_EIGEN_LIMIT: usize = 2000;

/// Eigenvalues below this magnitude make the Nystrom back-scaling singular;
/// the affected coordinate is zeroed and the extension flagged.
const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    /// Neighbor count for the local scales.
    pub k: usize,
    /// Density-normalization exponent (1 = anisotropic diffusion maps).
    pub alpha: f64,
    /// Diffusion time (positive integer).
    pub t: u32,
    /// Retained components; `None` selects min(n-1, 10) filtered by the
    /// eigen-gap cutoff lambda_j / lambda_1 >= 1e-3.
    pub n_components: Option<usize>,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            k: 10,
            alpha: 1.0,
            t: 1,
            n_components: None,
        }
    }
}

/// sigma_i = Euclidean distance from x_i to its k-th nearest neighbor
/// (self excluded). Zero distances fall back to the smallest positive scale
/// in the set, or 1e-12 when every scale degenerates.
pub fn local_scales(x: &DMatrix<f64>, k: usize) -> Result<DVector<f64>> {
    let n = x.nrows();
    if k == 0 || k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut sigma = DVector::zeros(n);
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (x.row(i) - x.row(j)).norm())
            .collect();
        dists.sort_by(f64::total_cmp);
        sigma[i] = dists[k - 1];
    }
    let smallest_positive = sigma
        .iter()
        .copied()
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let fallback = if smallest_positive.is_finite() {
        smallest_positive
    } else {
        1e-12
    };
    for s in sigma.iter_mut() {
        if *s == 0.0 {
            *s = fallback;
        }
    }
    Ok(sigma)
}

/// Self-tuning Gaussian affinity; unit diagonal, symmetric, entries in (0, 1].
pub fn affinity_matrix(x: &DMatrix<f64>, sigma: &DVector<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let d2 = (x.row(i) - x.row(j)).norm_squared();
            let v = (-d2 / (sigma[i] * sigma[j])).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Output of the two-stage normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionParts {
    /// Row-stochastic operator P = D~^-1 K~.
    pub p: DMatrix<f64>,
    /// Density-corrected kernel K~.
    pub ktilde: DMatrix<f64>,
    /// Row sums of K~ (the diagonal of D~).
    pub degrees: DVector<f64>,
    /// Raw kernel row sums q_i = sum_j K_ij, kept for out-of-sample rows.
    pub q: DVector<f64>,
}

/// Density correction followed by row normalization.
pub fn transition_matrix(kernel: &DMatrix<f64>, alpha: f64) -> Result<TransitionParts> {
    let n = kernel.nrows();
    let q = DVector::from_iterator(n, kernel.row_iter().map(|r| r.sum()));
    if q.iter().any(|&v| v <= 0.0) {
        return Err(Error::Eigensolver("kernel has a zero row sum".into()));
    }
    let qa: Vec<f64> = q.iter().map(|&v| v.powf(alpha)).collect();
    let mut ktilde = kernel.clone();
    for i in 0..n {
        for j in 0..n {
            ktilde[(i, j)] /= qa[i] * qa[j];
        }
    }
    let degrees = DVector::from_iterator(n, ktilde.row_iter().map(|r| r.sum()));
    if degrees.iter().any(|&v| v <= 0.0) {
        return Err(Error::Eigensolver("corrected kernel has a zero row sum".into()));
    }
    let mut p = ktilde.clone();
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] /= degrees[i];
        }
    }
    Ok(TransitionParts {
        p,
        ktilde,
        degrees,
        q,
    })
}

/// Largest-magnitude entry made positive, first such index deciding ties.
fn fix_sign(column: &mut DVector<f64>) {
    let mut idx = 0;
    for (i, v) in column.iter().enumerate() {
        if v.abs() > column[idx].abs() {
            idx = i;
        }
    }
    if column[idx] < 0.0 {
        *column *= -1.0;
    }
}

/// All eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
fn dense_symmetric_eigs(s: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = s.nrows();
    let eig = SymmetricEigen::try_new(s.clone(), 1e-13, 10_000)
        .ok_or_else(|| Error::Eigensolver("dense symmetric QR exceeded 10000 iterations".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

/// Top eigenpairs by subspace (orthogonal power) iteration with a
/// Rayleigh-Ritz projection. Deterministic: the start block is seeded with a
/// fixed constant.
fn iterative_symmetric_eigs(
    s: &DMatrix<f64>,
    count: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = s.nrows();
    let block = (count + 8).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_D1FF);
    let mut qmat = DMatrix::from_fn(n, block, |_, _| rng.gen::<f64>() - 0.5);

    let mut last: Option<Vec<f64>> = None;
    for iter in 0..max_iter {
        let z = s * &qmat;
        let qr = z.qr();
        qmat = qr.q();
        // Rayleigh-Ritz on the current subspace.
        let t = qmat.transpose() * s * &qmat;
        let t = (&t + t.transpose()) * 0.5;
        let (tvals, tvecs) = dense_symmetric_eigs(&t)?;
        let ritz = &qmat * &tvecs;
        let top: Vec<f64> = tvals.iter().take(count).copied().collect();
        let converged = match &last {
            Some(prev) => top
                .iter()
                .zip(prev)
                .all(|(a, b)| (a - b).abs() <= 1e-13 * a.abs().max(1.0)),
            None => false,
        };
        if converged && iter > 2 {
            let residual_ok = tvals.iter().take(count).enumerate().all(|(j, &lambda)| {
                let v = ritz.column(j).into_owned();
                (s * &v - lambda * &v).norm() <= 1e-9
            });
            if residual_ok {
                let mut vectors = DMatrix::zeros(n, count);
                for j in 0..count {
                    vectors.set_column(j, &ritz.column(j));
                }
                return Ok((top, vectors));
            }
        }
        qmat = ritz;
        last = Some(top);
    }
    Err(Error::Eigensolver(format!(
        "subspace iteration did not converge within {max_iter} iterations"
    )))
}

/// Spectral pieces of a fitted map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralParts {
    /// Nontrivial eigenvalues, descending.
    pub eigenvalues: DVector<f64>,
    /// Right eigenvectors of P, normalized against the stationary
    /// distribution and sign-fixed; n x m.
    pub eigenvectors: DMatrix<f64>,
    /// coords[i][j] = lambda_j^t * V[i][j]; n x m.
    pub coords: DMatrix<f64>,
}

/// Eigendecompose the transition operator and assemble diffusion coordinates,
/// dropping the trivial (lambda = 1, constant) pair.
pub fn diffusion_coords(
    parts: &TransitionParts,
    n_components: Option<usize>,
    t: u32,
) -> Result<SpectralParts> {
    let n = parts.p.nrows();
    if t == 0 {
        return Err(Error::Config("diffusion time t must be >= 1".into()));
    }
    if let Some(m) = n_components {
        if m == 0 || m > n - 1 {
            return Err(Error::Config(format!(
                "n_components must lie in [1, {}], got {m}",
                n - 1
            )));
        }
    }

    // Symmetric conjugate S = D~^-1/2 K~ D~^-1/2, exactly symmetric because
    // K~ is.
    let inv_sqrt_deg: Vec<f64> = parts.degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut s = parts.ktilde.clone();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }

    let want = n_components.map_or(n.min(11), |m| m + 1);
    let (values, vectors) = if n <= DENSE_EIGEN_LIMIT {
        dense_symmetric_eigs(&s)?
    } else {
        iterative_symmetric_eigs(&s, want.min(n), 500)?
    };

    // Map back to right eigenvectors of P and normalize so that
    // <v_j, v_j>_phi0 = 1: v_j = sqrt(sum(d~)) * D~^-1/2 u_j.
    let total_degree: f64 = parts.degrees.sum();
    let scale = total_degree.sqrt();
    let available = values.len();

    let m = match n_components {
        Some(m) => m.min(available - 1),
        None => {
            let cap = (n - 1).min(10).min(available - 1);
            let lead = values.get(1).copied().unwrap_or(0.0);
            let passing = values[1..=cap]
                .iter()
                .take_while(|&&v| lead > 0.0 && v / lead >= 1e-3)
                .count();
            passing.max(1)
        }
    };

    let mut eigenvalues = DVector::zeros(m);
    let mut eigenvectors = DMatrix::zeros(n, m);
    let mut coords = DMatrix::zeros(n, m);
    for j in 0..m {
        let lambda = values[j + 1];
        eigenvalues[j] = lambda;
        let mut v = DVector::from_iterator(
            n,
            (0..n).map(|i| scale * inv_sqrt_deg[i] * vectors[(i, j + 1)]),
        );
        fix_sign(&mut v);
        let lt = lambda.powi(t as i32);
        for i in 0..n {
            eigenvectors[(i, j)] = v[i];
            coords[(i, j)] = lt * v[i];
        }
    }

    Ok(SpectralParts {
        eigenvalues,
        eigenvectors,
        coords,
    })
}

/// Out-of-sample projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Extended {
    pub coords: DVector<f64>,
    /// Set when the point is effectively outside the kernel's support or a
    /// retained eigenvalue is numerically zero; affected coordinates are 0.
    pub degenerate: bool,
}

/// A fitted self-tuning diffusion map over standardized continuous features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMap {
    config: DiffusionConfig,
    x_train: DMatrix<f64>,
    sigma: DVector<f64>,
    q: DVector<f64>,
    spectral: SpectralParts,
}

impl DiffusionMap {
    pub fn fit(x_train: DMatrix<f64>, config: DiffusionConfig) -> Result<Self> {
        let n = x_train.nrows();
        if n < 3 {
            return Err(Error::Config(format!(
                "diffusion map needs at least 3 rows, got {n}"
            )));
        }
        let sigma = local_scales(&x_train, config.k)?;
        let kernel = affinity_matrix(&x_train, &sigma);
        let parts = transition_matrix(&kernel, config.alpha)?;
        let spectral = diffusion_coords(&parts, config.n_components, config.t)?;
        Ok(DiffusionMap {
            config,
            x_train,
            sigma,
            q: parts.q,
            spectral,
        })
    }

    pub fn config(&self) -> &DiffusionConfig {
        &self.config
    }

    pub fn n_components(&self) -> usize {
        self.spectral.eigenvalues.len()
    }

    pub fn n_train(&self) -> usize {
        self.x_train.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x_train.ncols()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.spectral.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.spectral.eigenvectors
    }

    /// Training-point coordinates, one row per training row.
    pub fn coords(&self) -> &DMatrix<f64> {
        &self.spectral.coords
    }

    pub fn coords_of(&self, i: usize) -> DVector<f64> {
        self.spectral.coords.row(i).transpose()
    }

    /// Kernel row of an out-of-sample point against the training set,
    /// normalized the same way training rows were.
    fn transition_row(&self, x: &[f64]) -> Result<Option<DVector<f64>>> {
        let n = self.x_train.nrows();
        if x.len() != self.x_train.ncols() {
            return Err(Error::Dimension {
                expected: self.x_train.ncols(),
                got: x.len(),
            });
        }
        let dists: Vec<f64> = (0..n)
            .map(|i| {
                (0..x.len())
                    .map(|j| (x[j] - self.x_train[(i, j)]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();

        // k-th nearest training point, skipping exact duplicates so that
        // extending a training point reuses its fitted scale.
        let mut sorted: Vec<f64> = dists.iter().copied().filter(|&d| d > 0.0).collect();
        sorted.sort_by(f64::total_cmp);
        let sigma_new = if sorted.is_empty() {
            self.sigma.min()
        } else {
            sorted[(self.config.k - 1).min(sorted.len() - 1)]
        };

        let kernel_row: Vec<f64> = (0..n)
            .map(|i| (-dists[i] * dists[i] / (sigma_new * self.sigma[i])).exp())
            .collect();
        let q_new: f64 = kernel_row.iter().sum();
        if q_new <= 0.0 || !q_new.is_finite() {
            return Ok(None);
        }
        let qa_new = q_new.powf(self.config.alpha);
        let corrected: Vec<f64> = kernel_row
            .iter()
            .zip(self.q.iter())
            .map(|(&kv, &qi)| kv / (qa_new * qi.powf(self.config.alpha)))
            .collect();
        let row_sum: f64 = corrected.iter().sum();
        if row_sum <= 0.0 || !row_sum.is_finite() {
            return Ok(None);
        }
        Ok(Some(DVector::from_iterator(
            n,
            corrected.iter().map(|&v| v / row_sum),
        )))
    }

    /// Nystrom extension: psi_j(x) = lambda_j^(t-1) * sum_i p(x, i) V_ij.
    pub fn extend(&self, x: &[f64]) -> Result<Extended> {
        let m = self.n_components();
        let Some(p_row) = self.transition_row(x)? else {
            return Ok(Extended {
                coords: DVector::zeros(m),
                degenerate: true,
            });
        };
        let mut coords = DVector::zeros(m);
        let mut degenerate = false;
        for j in 0..m {
            let lambda = self.spectral.eigenvalues[j];
            if lambda.abs() < LAMBDA_FLOOR {
                degenerate = true;
                continue;
            }
            let projected = p_row.dot(&self.spectral.eigenvectors.column(j));
            coords[j] = lambda.powi(self.config.t as i32 - 1) * projected;
        }
        Ok(Extended { coords, degenerate })
    }

    /// Diffusion distance between two points in the training feature space.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let ca = self.extend(a)?;
        let cb = self.extend(b)?;
        Ok(Self::distance_between_coords(&ca.coords, &cb.coords))
    }

    pub fn distance_between_coords(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).norm()
    }

    pub fn to_artifact(&self) -> DiffusionArtifact {
        DiffusionArtifact {
            x_train_hash: matrix_hash(&self.x_train),
            map: self.clone(),
        }
    }

    /// Hash of the training matrix this map was fitted on, for artifact
    /// reuse checks.
    pub fn train_matrix_hash(&self) -> String {
        matrix_hash(&self.x_train)
    }
}

/// Content hash of an arbitrary matrix in row-major order.
pub fn matrix_content_hash(m: &DMatrix<f64>) -> String {
    matrix_hash(m)
}

fn matrix_hash(m: &DMatrix<f64>) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            hasher.update(m[(i, j)].to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Serialized fitted map plus a hash of the training matrix it was built on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionArtifact {
    pub x_train_hash: String,
    pub map: DiffusionMap,
}

impl DiffusionArtifact {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<DiffusionMap> {
        let artifact: DiffusionArtifact = serde_json::from_str(json)?;
        let recomputed = matrix_hash(&artifact.map.x_train);
        if recomputed != artifact.x_train_hash {
            return Err(Error::Serde(
                "diffusion artifact hash does not match its training matrix".into(),
            ));
        }
        Ok(artifact.map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn matrix_from_points(points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.len();
        let d = points[0].len();
        DMatrix::from_fn(n, d, |i, j| points[i][j])
    }

    fn random_points(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.gen::<f64>() * 4.0 - 2.0)
    }

    // ----- independent oracles -------------------------------------------

    /// Entrywise kernel evaluation with its own scale computation.
    fn brute_affinity(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        let n = x.nrows();
        let sigma: Vec<f64> = (0..n)
            .map(|i| {
                let mut d: Vec<f64> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (x.row(i) - x.row(j)).norm())
                    .collect();
                d.sort_by(f64::total_cmp);
                d[k - 1]
            })
            .collect();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let d2 = (x.row(i) - x.row(j)).norm_squared();
                out[(i, j)] = (-d2 / (sigma[i] * sigma[j])).exp();
            }
        }
        out
    }

    fn brute_two_stage(kernel: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        let n = kernel.nrows();
        let mut q = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                q[i] += kernel[(i, j)];
            }
        }
        let mut kt = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                kt[(i, j)] = kernel[(i, j)] / (q[i].powf(alpha) * q[j].powf(alpha));
            }
        }
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| kt[(i, j)]).sum();
            for j in 0..n {
                p[(i, j)] = kt[(i, j)] / row_sum;
            }
        }
        p
    }

    /// Stationary distribution by power iteration on P transpose.
    fn brute_stationary(p: &DMatrix<f64>) -> DVector<f64> {
        let n = p.nrows();
        let mut v = DVector::from_element(n, 1.0 / n as f64);
        for _ in 0..100_000 {
            let next = p.transpose() * &v;
            let next = &next / next.sum();
            if (&next - &v).abs().max() < 1e-15 {
                return next;
            }
            v = next;
        }
        v
    }

    /// Direct evaluation of the diffusion distance from t-step transition
    /// rows and the stationary distribution.
    fn brute_diffusion_distance(p: &DMatrix<f64>, t: u32, a: usize, b: usize) -> f64 {
        let n = p.nrows();
        let mut pt = DMatrix::<f64>::identity(n, n);
        for _ in 0..t {
            pt = &pt * p;
        }
        let phi0 = brute_stationary(p);
        let mut acc = 0.0;
        for z in 0..n {
            acc += (pt[(a, z)] - pt[(b, z)]).powi(2) / phi0[z];
        }
        acc.sqrt()
    }

    /// Jacobi rotation eigensolver, independent of the production path.
    fn jacobi_eigs(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let n = s.nrows();
        let mut a = s.clone();
        let mut v = DMatrix::<f64>::identity(n, n);
        for _ in 0..200 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - sn * akq;
                        a[(k, q)] = sn * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - sn * aqk;
                        a[(q, k)] = sn * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - sn * vkq;
                        v[(k, q)] = sn * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
        let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (c, &i) in order.iter().enumerate() {
            vectors.set_column(c, &v.column(i));
        }
        (values, vectors)
    }

    // ----- local scales ----------------------------------------------------

    #[test]
    fn collinear_scales() {
        let x = matrix_from_points(&[vec![0.0], vec![1.0], vec![2.0]]);
        let s1 = local_scales(&x, 1).unwrap();
        assert_eq!(s1.as_slice(), &[1.0, 1.0, 1.0]);
        let s2 = local_scales(&x, 2).unwrap();
        assert_eq!(s2.as_slice(), &[2.0, 1.0, 2.0]);
    }

    #[test]
    fn duplicate_points_fall_back_to_positive_scale() {
        let x = matrix_from_points(&[vec![0.0], vec![0.0], vec![5.0]]);
        let s = local_scales(&x, 1).unwrap();
        assert!(s.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn scales_reject_large_k() {
        let x = matrix_from_points(&[vec![0.0], vec![1.0]]);
        assert!(local_scales(&x, 2).is_err());
    }

    // ----- affinity ----------------------------------------------------------

    #[test]
    fn kernel_diagonal_is_one() {
        let x = random_points(5, 2, 1);
        let sigma = local_scales(&x, 2).unwrap();
        let k = affinity_matrix(&x, &sigma);
        for i in 0..5 {
            assert_eq!(k[(i, i)], 1.0);
        }
    }

    #[test]
    fn kernel_forced_e_inverse() {
        let x = matrix_from_points(&[vec![0.0], vec![3.0]]);
        let sigma = DVector::from_vec(vec![3.0, 3.0]);
        let k = affinity_matrix(&x, &sigma);
        assert!((k[(0, 1)] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn kernel_matches_brute_force() {
        let x = random_points(3, 2, 2);
        let sigma = local_scales(&x, 1).unwrap();
        let ours = affinity_matrix(&x, &sigma);
        let brute = brute_affinity(&x, 1);
        assert!((ours - brute).abs().max() < 1e-12);
    }

    // ----- transition ----------------------------------------------------------

    #[test]
    fn transition_two_by_two() {
        let k = matrix_from_points(&[vec![1.0, 0.5], vec![0.5, 1.0]]);
        let parts = transition_matrix(&k, 0.0).unwrap();
        assert!((parts.p[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((parts.p[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((parts.p[(1, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn transition_matches_brute_force_on_asymmetric_density() {
        // Three tight points and one outlier: uneven q.
        let x = matrix_from_points(&[
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.1],
            vec![3.0, 3.0],
        ]);
        let sigma = local_scales(&x, 1).unwrap();
        let k = affinity_matrix(&x, &sigma);
        let parts = transition_matrix(&k, 1.0).unwrap();
        let brute = brute_two_stage(&k, 1.0);
        assert!((&parts.p - brute).abs().max() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn transition_rows_are_stochastic(seed in 0u64..1000, n in 3usize..9, alpha in 0.0f64..1.0) {
            let x = random_points(n, 2, seed);
            let sigma = local_scales(&x, 1).unwrap();
            let k = affinity_matrix(&x, &sigma);
            let parts = transition_matrix(&k, alpha).unwrap();
            for i in 0..n {
                let sum: f64 = parts.p.row(i).sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    // ----- spectrum ------------------------------------------------------------

    #[test]
    fn stochastic_leading_eigenpair() {
        let x = random_points(8, 3, 3);
        let sigma = local_scales(&x, 2).unwrap();
        let k = affinity_matrix(&x, &sigma);
        let parts = transition_matrix(&k, 1.0).unwrap();
        // Constant vector is a fixed point of P.
        let ones = DVector::from_element(8, 1.0);
        assert!((&parts.p * &ones - &ones).abs().max() < 1e-12);
    }

    #[test]
    fn two_state_chain_analytics() {
        let k = matrix_from_points(&[vec![1.0, 0.5], vec![0.5, 1.0]]);
        let parts = transition_matrix(&k, 0.0).unwrap();
        let spectral = diffusion_coords(&parts, Some(1), 1).unwrap();
        assert!((spectral.eigenvalues[0] - 1.0 / 3.0).abs() < 1e-12);
        // Eigenvector proportional to (1, -1); under the stationary
        // normalization it is exactly (1, -1) after the sign fix.
        assert!((spectral.eigenvectors[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((spectral.eigenvectors[(1, 0)] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn spectrum_matches_jacobi_oracle() {
        let x = random_points(6, 2, 4);
        let sigma = local_scales(&x, 2).unwrap();
        let kernel = affinity_matrix(&x, &sigma);
        let parts = transition_matrix(&kernel, 1.0).unwrap();
        let spectral = diffusion_coords(&parts, Some(5), 1).unwrap();

        let inv_sqrt: Vec<f64> = parts.degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
        let mut s = parts.ktilde.clone();
        for i in 0..6 {
            for j in 0..6 {
                s[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
        let (jvals, jvecs) = jacobi_eigs(&s);
        let scale: f64 = parts.degrees.sum().sqrt();
        for j in 0..5 {
            assert!((spectral.eigenvalues[j] - jvals[j + 1]).abs() < 1e-8);
            // Compare |V| entrywise (sign conventions may differ).
            for i in 0..6 {
                let oracle = (scale * inv_sqrt[i] * jvecs[(i, j + 1)]).abs();
                assert!((spectral.eigenvectors[(i, j)].abs() - oracle).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn eigenvalues_bounded_and_sorted() {
        let x = random_points(9, 3, 5);
        let dm = DiffusionMap::fit(x, DiffusionConfig { k: 3, ..Default::default() }).unwrap();
        let ev = dm.eigenvalues();
        for j in 0..ev.len() {
            assert!(ev[j].abs() <= 1.0 + 1e-9);
            if j > 0 {
                assert!(ev[j] <= ev[j - 1] + 1e-12);
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let x = random_points(12, 3, 6);
        let cfg = DiffusionConfig { k: 3, ..Default::default() };
        let a = DiffusionMap::fit(x.clone(), cfg).unwrap();
        let b = DiffusionMap::fit(x, cfg).unwrap();
        assert_eq!(a.coords(), b.coords());
    }

    #[test]
    fn first_coordinate_separates_two_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pts = Vec::new();
        for i in 0..30 {
            let c = if i < 15 { -4.0 } else { 4.0 };
            pts.push(vec![c + 0.3 * rng.gen::<f64>(), 0.3 * rng.gen::<f64>()]);
        }
        let x = matrix_from_points(&pts);
        let dm = DiffusionMap::fit(x, DiffusionConfig { k: 3, ..Default::default() }).unwrap();
        let signs: Vec<bool> = (0..30).map(|i| dm.coords()[(i, 0)] > 0.0).collect();
        assert!(signs[..15].iter().all(|&s| s == signs[0]));
        assert!(signs[15..].iter().all(|&s| s == signs[15]));
        assert_ne!(signs[0], signs[15]);
    }

    #[test]
    fn minimal_fit_with_three_points() {
        let x = matrix_from_points(&[vec![0.0], vec![1.0], vec![2.5]]);
        let dm = DiffusionMap::fit(
            x,
            DiffusionConfig { k: 1, n_components: Some(1), ..Default::default() },
        )
        .unwrap();
        assert_eq!(dm.n_components(), 1);
    }

    // ----- extension --------------------------------------------------------

    #[test]
    fn extending_training_points_reproduces_coords() {
        let x = random_points(20, 3, 8);
        let dm = DiffusionMap::fit(
            x.clone(),
            DiffusionConfig { k: 4, n_components: Some(5), ..Default::default() },
        )
        .unwrap();
        for i in 0..20 {
            let row: Vec<f64> = (0..3).map(|j| x[(i, j)]).collect();
            let ext = dm.extend(&row).unwrap();
            assert!(!ext.degenerate);
            let stored = dm.coords_of(i);
            assert!(
                (ext.coords - stored).abs().max() < 1e-6,
                "row {i} failed to reproduce"
            );
        }
    }

    #[test]
    fn centroid_of_symmetric_pair_gets_equal_weights() {
        let x = matrix_from_points(&[
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 3.0],
            vec![0.0, -3.0],
        ]);
        let dm = DiffusionMap::fit(x, DiffusionConfig { k: 1, ..Default::default() }).unwrap();
        let p = dm.transition_row(&[0.0, 0.0]).unwrap().unwrap();
        assert!((p[0] - p[1]).abs() < 1e-12);
        assert!((p[2] - p[3]).abs() < 1e-12);
    }

    #[test]
    fn far_point_is_flagged_with_zero_coords() {
        let x = random_points(10, 2, 9);
        let dm = DiffusionMap::fit(x, DiffusionConfig { k: 2, ..Default::default() }).unwrap();
        let ext = dm.extend(&[1e6, 1e6]).unwrap();
        assert!(ext.degenerate);
        assert!(ext.coords.iter().all(|&c| c == 0.0));
    }

    // ----- distance --------------------------------------------------------

    #[test]
    fn distance_to_self_is_zero() {
        let x = random_points(10, 2, 10);
        let dm = DiffusionMap::fit(x.clone(), DiffusionConfig { k: 2, ..Default::default() })
            .unwrap();
        let a: Vec<f64> = (0..2).map(|j| x[(0, j)]).collect();
        assert_eq!(dm.distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn spectral_distance_matches_eq1_brute_force() {
        let x = random_points(7, 2, 11);
        let dm = DiffusionMap::fit(
            x.clone(),
            DiffusionConfig { k: 2, n_components: Some(6), t: 1, alpha: 1.0 },
        )
        .unwrap();
        let sigma = local_scales(&x, 2).unwrap();
        let kernel = affinity_matrix(&x, &sigma);
        let parts = transition_matrix(&kernel, 1.0).unwrap();
        for a in 0..7 {
            for b in (a + 1)..7 {
                let spectral =
                    DiffusionMap::distance_between_coords(&dm.coords_of(a), &dm.coords_of(b));
                let brute = brute_diffusion_distance(&parts.p, 1, a, b);
                assert!(
                    (spectral - brute).abs() < 1e-8,
                    "pair ({a},{b}): spectral {spectral} vs brute {brute}"
                );
            }
        }
    }

    /// Two dense bars joined by a sparse bridge; `n_side` points per bar.
    fn dumbbell(n_side: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for _ in 0..n_side {
            pts.push(vec![-3.0 + 2.0 * rng.gen::<f64>(), 4.0 * rng.gen::<f64>() - 2.0]);
            pts.push(vec![1.0 + 2.0 * rng.gen::<f64>(), 4.0 * rng.gen::<f64>() - 2.0]);
        }
        for i in 0..9 {
            pts.push(vec![-0.9 + 0.225 * i as f64, 0.0]);
        }
        matrix_from_points(&pts)
    }

    #[test]
    fn bottleneck_shortens_within_cluster_distance() {
        let x = dumbbell(150, 13);
        let dm = DiffusionMap::fit(
            x,
            DiffusionConfig { k: 7, t: 8, ..Default::default() },
        )
        .unwrap();
        // Same Euclidean separation from A, but C stays inside the left bar
        // while the path to B crosses the bridge.
        let a = [-1.0, -1.0];
        let c = [-1.0, 1.0];
        let b = [1.0, -1.0];
        let dac = dm.distance(&a, &c).unwrap();
        let dab = dm.distance(&a, &b).unwrap();
        assert!(dac < dab, "D(A,C)={dac} should be < D(A,B)={dab}");
    }

    #[test]
    fn pseudometric_properties() {
        let x = random_points(9, 2, 14);
        let dm = DiffusionMap::fit(x.clone(), DiffusionConfig { k: 2, ..Default::default() })
            .unwrap();
        let point = |i: usize| -> Vec<f64> { (0..2).map(|j| x[(i, j)]).collect() };
        for i in 0..9 {
            for j in 0..9 {
                let dij = dm.distance(&point(i), &point(j)).unwrap();
                let dji = dm.distance(&point(j), &point(i)).unwrap();
                assert_eq!(dij, dji);
                for l in 0..9 {
                    let dil = dm.distance(&point(i), &point(l)).unwrap();
                    let dlj = dm.distance(&point(l), &point(j)).unwrap();
                    assert!(dij <= dil + dlj + 1e-9);
                }
            }
        }
    }

    #[test]
    fn distances_shrink_with_time() {
        let x = random_points(12, 2, 15);
        let mut last = f64::INFINITY;
        for t in [1u32, 2, 5, 20] {
            let dm = DiffusionMap::fit(
                x.clone(),
                DiffusionConfig { k: 3, t, n_components: Some(6), alpha: 1.0 },
            )
            .unwrap();
            let d = DiffusionMap::distance_between_coords(&dm.coords_of(0), &dm.coords_of(7));
            assert!(d <= last + 1e-12, "distance grew with t={t}");
            last = d;
        }
    }

    #[test]
    fn iterative_eigensolver_matches_dense() {
        let x = random_points(40, 3, 16);
        let sigma = local_scales(&x, 4).unwrap();
        let kernel = affinity_matrix(&x, &sigma);
        let parts = transition_matrix(&kernel, 1.0).unwrap();
        let inv_sqrt: Vec<f64> = parts.degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
        let mut s = parts.ktilde.clone();
        for i in 0..40 {
            for j in 0..40 {
                s[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
        let (dense_vals, _) = dense_symmetric_eigs(&s).unwrap();
        let (iter_vals, iter_vecs) = iterative_symmetric_eigs(&s, 5, 2000).unwrap();
        for j in 0..5 {
            assert!((dense_vals[j] - iter_vals[j]).abs() < 1e-8);
            let v = iter_vecs.column(j).into_owned();
            let residual = (&s * &v - iter_vals[j] * &v).norm();
            assert!(residual < 1e-8);
        }
    }

    #[test]
    fn artifact_round_trip_and_hash_guard() {
        let x = random_points(10, 2, 17);
        let dm = DiffusionMap::fit(x, DiffusionConfig { k: 2, ..Default::default() }).unwrap();
        let json = dm.to_artifact().to_json().unwrap();
        let back = DiffusionArtifact::from_json(&json).unwrap();
        assert_eq!(back.coords(), dm.coords());

        let mut tampered: DiffusionArtifact = serde_json::from_str(&json).unwrap();
        tampered.map.x_train[(0, 0)] += 1.0;
        let json2 = serde_json::to_string(&tampered).unwrap();
        assert!(DiffusionArtifact::from_json(&json2).is_err());
    }
}
