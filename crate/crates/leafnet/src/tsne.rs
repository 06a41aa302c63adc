//! Exact O(n^2) t-SNE in f64: per-point bandwidth calibration by bisection,
//! symmetrized joint probabilities, KL objective with its analytic gradient,
//! and momentum gradient descent with early exaggeration. Sized for desk-
//! scale feature sets (a few hundred points).

use crate::rng::RngStream;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum TsneError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("calibration failed for {} point(s) (first: row {first}, achieved perplexity {achieved:.4})", rows.len())]
    CalibrationFailed {
        rows: Vec<usize>,
        first: usize,
        achieved: f64,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub output_dim: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations the exaggerated P matrix stays active.
    pub exaggeration_iters: usize,
    pub momentum_early: f64,
    pub momentum_late: f64,
    /// Iteration at which momentum switches from early to late.
    pub momentum_switch: usize,
    /// Convergence tolerance on the entropy (base-2) of each conditional row.
    pub entropy_tol: f64,
    pub max_bisect_steps: usize,
    /// Z-score the input features per dimension before computing distances.
    pub standardize: bool,
    /// Fail when a row cannot reach the entropy tolerance; when false the
    /// row keeps the best bandwidth found.
    pub strict_calibration: bool,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            output_dim: 2,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_early: 0.5,
            momentum_late: 0.8,
            momentum_switch: 250,
            entropy_tol: 1e-4,
            max_bisect_steps: 50,
            standardize: false,
            strict_calibration: true,
        }
    }
}

/// Symmetric joint probabilities with per-point bandwidths.
#[derive(Debug, Clone)]
pub struct AffinityMatrices {
    pub n: usize,
    /// Row-major n x n joint matrix: symmetric, zero diagonal, sums to 1.
    pub p: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Row-major squared Euclidean distance matrix.
pub fn pairwise_squared_distances(features: &[Vec<f64>]) -> Vec<f64> {
    let n = features.len();
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for (a, b) in features[i].iter().zip(&features[j]) {
                let d = a - b;
                acc += d * d;
            }
            d2[i * n + j] = acc;
            d2[j * n + i] = acc;
        }
    }
    d2
}

pub struct Calibration {
    /// Conditional probabilities P(j|i), rows summing to 1, zero diagonal.
    pub conditional: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Rows that did not reach the entropy tolerance within the step budget.
    pub unconverged: Vec<usize>,
    /// Achieved base-2 entropy per row.
    pub entropy: Vec<f64>,
}

/// Bisects each row's bandwidth until the conditional distribution's
/// perplexity (2^H) matches the target within the entropy tolerance.
/// Internally the search runs on the precision beta = 1 / (2 sigma^2),
/// which is monotone in sigma.
pub fn calibrate_perplexity(
    d2: &[f64],
    n: usize,
    perplexity: f64,
    entropy_tol: f64,
    max_steps: usize,
) -> Result<Calibration, TsneError> {
    if n < 3 {
        return Err(TsneError::InvalidParameter(format!("need at least 3 points, got {n}")));
    }
    if !(perplexity > 1.0) || perplexity >= (n - 1) as f64 {
        return Err(TsneError::InvalidParameter(format!(
            "perplexity {perplexity} must lie in (1, n-1) for n = {n}"
        )));
    }
    if d2.len() != n * n {
        return Err(TsneError::InvalidParameter(format!(
            "distance matrix has {} entries, expected {}",
            d2.len(),
            n * n
        )));
    }
    let target_entropy = perplexity.log2();
    let mut conditional = vec![0.0; n * n];
    let mut sigma = vec![0.0; n];
    let mut entropy = vec![0.0; n];
    let mut unconverged = Vec::new();

    let mut row_p = vec![0.0; n];
    for i in 0..n {
        let mut beta = 1.0;
        let mut beta_lo = f64::NEG_INFINITY; // bracket as in a standard search
        let mut beta_hi = f64::INFINITY;
        let mut best_beta = beta;
        let mut best_err = f64::INFINITY;

        for _ in 0..max_steps {
            // Conditional row under the current precision; shift by the row
            // minimum distance for stability.
            let mut min_d2 = f64::INFINITY;
            for j in 0..n {
                if j != i && d2[i * n + j] < min_d2 {
                    min_d2 = d2[i * n + j];
                }
            }
            let mut sum = 0.0;
            for j in 0..n {
                if j == i {
                    row_p[j] = 0.0;
                } else {
                    let e = (-beta * (d2[i * n + j] - min_d2)).exp();
                    row_p[j] = e;
                    sum += e;
                }
            }
            // Base-2 entropy of the normalized row.
            let mut h = 0.0;
            for j in 0..n {
                if j != i && row_p[j] > 0.0 {
                    let p = row_p[j] / sum;
                    h -= p * p.log2();
                }
            }
            let err = h - target_entropy;
            if err.abs() < best_err {
                best_err = err.abs();
                best_beta = beta;
            }
            if err.abs() <= entropy_tol {
                break;
            }
            if err > 0.0 {
                // Entropy too high -> distribution too flat -> raise beta.
                beta_lo = beta;
                beta = if beta_hi.is_finite() { (beta + beta_hi) / 2.0 } else { beta * 2.0 };
            } else {
                beta_hi = beta;
                beta = if beta_lo.is_finite() { (beta + beta_lo) / 2.0 } else { beta / 2.0 };
            }
        }

        // Recompute the row at the best precision found and store it.
        let mut min_d2 = f64::INFINITY;
        for j in 0..n {
            if j != i && d2[i * n + j] < min_d2 {
                min_d2 = d2[i * n + j];
            }
        }
        let mut sum = 0.0;
        for j in 0..n {
            if j == i {
                row_p[j] = 0.0;
            } else {
                let e = (-best_beta * (d2[i * n + j] - min_d2)).exp();
                row_p[j] = e;
                sum += e;
            }
        }
        let mut h_best = 0.0;
        for j in 0..n {
            conditional[i * n + j] = row_p[j] / sum;
            if j != i && row_p[j] > 0.0 {
                let p = row_p[j] / sum;
                h_best -= p * p.log2();
            }
        }
        entropy[i] = h_best;
        sigma[i] = (1.0 / (2.0 * best_beta)).sqrt();
        if (h_best - target_entropy).abs() > entropy_tol {
            unconverged.push(i);
        }
    }

    Ok(Calibration {
        conditional,
        sigma,
        unconverged,
        entropy,
    })
}

/// Symmetrization: `p_ij = (p(j|i) + p(i|j)) / (2n)`, floored at 1e-12 off
/// the diagonal.
pub fn joint_probabilities(conditional: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    let inv = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((conditional[i * n + j] + conditional[j * n + i]) * inv).max(1e-12);
            }
        }
    }
    p
}

/// KL(P || Q) for the Student-t kernel embedding, plus its gradient:
/// `grad_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)`.
pub fn kl_and_gradient(p: &[f64], y: &[f64], n: usize, dim: usize) -> (f64, Vec<f64>) {
    // Unnormalized Student-t affinities.
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for d in 0..dim {
                let diff = y[i * dim + d] - y[j * dim + d];
                d2 += diff * diff;
            }
            let v = 1.0 / (1.0 + d2);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    let mut grad = vec![0.0; n * dim];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p[i * n + j];
            let qij = (num[i * n + j] / z).max(1e-12);
            if pij > 0.0 {
                kl += pij * (pij / qij).ln();
            }
            let mult = 4.0 * (pij - qij) * num[i * n + j];
            for d in 0..dim {
                grad[i * dim + d] += mult * (y[i * dim + d] - y[j * dim + d]);
            }
        }
    }
    (kl, grad)
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    /// Row-major n x output_dim embedding.
    pub embedding: Vec<f64>,
    pub kl_trace: Vec<f64>,
    pub affinities: AffinityMatrices,
}

/// Full pipeline: calibration, symmetrization, and the momentum descent with
/// early exaggeration. The embedding is mean-centered every iteration, so
/// final column means are ~0.
pub fn run_tsne(features: &[Vec<f64>], cfg: &TsneConfig, stream: &mut RngStream) -> Result<TsneResult, TsneError> {
    let n = features.len();
    if n < 5 {
        return Err(TsneError::InvalidParameter(format!("need at least 5 points, got {n}")));
    }
    if cfg.output_dim == 0 {
        return Err(TsneError::InvalidParameter("output_dim must be positive".into()));
    }
    let dim_in = features[0].len();
    if features.iter().any(|f| f.len() != dim_in) {
        return Err(TsneError::InvalidParameter("ragged feature rows".into()));
    }

    let feats: Vec<Vec<f64>> = if cfg.standardize {
        standardize(features)
    } else {
        features.to_vec()
    };

    let d2 = pairwise_squared_distances(&feats);
    let cal = calibrate_perplexity(&d2, n, cfg.perplexity, cfg.entropy_tol, cfg.max_bisect_steps)?;
    if cfg.strict_calibration && !cal.unconverged.is_empty() {
        let first = cal.unconverged[0];
        return Err(TsneError::CalibrationFailed {
            rows: cal.unconverged,
            achieved: cal.entropy[first].exp2(),
            first,
        });
    }
    let p = joint_probabilities(&cal.conditional, n);

    let dim = cfg.output_dim;
    // Initial embedding ~ N(0, 1e-4): std 1e-2.
    let mut y: Vec<f64> = (0..n * dim).map(|_| stream.normal() * 1e-2).collect();
    let mut velocity = vec![0.0; n * dim];
    let mut kl_trace = Vec::with_capacity(cfg.iterations);
    let mut p_active: Vec<f64> = p.iter().map(|v| v * cfg.early_exaggeration).collect();
    let mut exaggerated = true;

    for iter in 0..cfg.iterations {
        if exaggerated && iter >= cfg.exaggeration_iters {
            p_active = p.clone();
            exaggerated = false;
        }
        let momentum = if iter < cfg.momentum_switch {
            cfg.momentum_early
        } else {
            cfg.momentum_late
        };
        let (kl, grad) = kl_and_gradient(&p_active, &y, n, dim);
        kl_trace.push(kl);
        for i in 0..n * dim {
            velocity[i] = momentum * velocity[i] - cfg.learning_rate * grad[i];
            y[i] += velocity[i];
        }
        // Remove the objective's translation invariance.
        for d in 0..dim {
            let mut mean = 0.0;
            for i in 0..n {
                mean += y[i * dim + d];
            }
            mean /= n as f64;
            for i in 0..n {
                y[i * dim + d] -= mean;
            }
        }
    }

    Ok(TsneResult {
        embedding: y,
        kl_trace,
        affinities: AffinityMatrices {
            n,
            p,
            sigma: cal.sigma,
        },
    })
}

fn standardize(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = features.len();
    let dim = features[0].len();
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, &v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = vec![0.0; dim];
    for f in features {
        for d in 0..dim {
            let dv = f[d] - mean[d];
            var[d] += dv * dv;
        }
    }
    for v in var.iter_mut() {
        *v /= n as f64;
    }
    features
        .iter()
        .map(|f| {
            f.iter()
                .enumerate()
                .map(|(d, &v)| if var[d] > 0.0 { (v - mean[d]) / var[d].sqrt() } else { 0.0 })
                .collect()
        })
        .collect()
}

/// `embedding.csv`: `sample_id,x,y,stress_label,severity_label` per row.
/// A missing severity label prints as an empty cell.
pub fn write_embedding_csv(
    path: &Path,
    ids: &[String],
    embedding: &[f64],
    stress_labels: &[String],
    severity_labels: &[Option<String>],
) -> Result<(), TsneError> {
    let n = ids.len();
    if embedding.len() != n * 2 || stress_labels.len() != n || severity_labels.len() != n {
        return Err(TsneError::InvalidParameter(format!(
            "inconsistent lengths: {n} ids, {} coords, {} stress, {} severity",
            embedding.len(),
            stress_labels.len(),
            severity_labels.len()
        )));
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "sample_id,x,y,stress_label,severity_label")?;
    for i in 0..n {
        writeln!(
            f,
            "{},{},{},{},{}",
            ids[i],
            embedding[i * 2],
            embedding[i * 2 + 1],
            stress_labels[i],
            severity_labels[i].as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

pub fn read_embedding_csv(path: &Path) -> Result<Vec<(String, f64, f64, String, Option<String>)>, TsneError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "sample_id,x,y,stress_label,severity_label" {
        return Err(TsneError::InvalidParameter(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(TsneError::InvalidParameter(format!("bad row {line:?}")));
        }
        let x: f64 = cells[1]
            .parse()
            .map_err(|_| TsneError::InvalidParameter(format!("bad x {:?}", cells[1])))?;
        let y: f64 = cells[2]
            .parse()
            .map_err(|_| TsneError::InvalidParameter(format!("bad y {:?}", cells[2])))?;
        let severity = if cells[4].is_empty() { None } else { Some(cells[4].to_string()) };
        out.push((cells[0].to_string(), x, y, cells[3].to_string(), severity));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equidistant_simplex(n: usize) -> Vec<f64> {
        // Distance matrix of n mutually equidistant points.
        let mut d2 = vec![1.0; n * n];
        for i in 0..n {
            d2[i * n + i] = 0.0;
        }
        d2
    }

    #[test]
    fn equidistant_points_get_uniform_conditionals() {
        let n = 8;
        let d2 = equidistant_simplex(n);
        let cal = calibrate_perplexity(&d2, n, (n - 1) as f64 - 1e-9, 1e-4, 50).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 0.0 } else { 1.0 / (n - 1) as f64 };
                assert!(
                    (cal.conditional[i * n + j] - want).abs() < 1e-9,
                    "p({j}|{i}) = {}",
                    cal.conditional[i * n + j]
                );
            }
        }
    }

    #[test]
    fn conditional_rows_sum_to_one() {
        let mut rng = RngStream::new(71, 0);
        let feats: Vec<Vec<f64>> = (0..60).map(|_| rng.normal_vec(10)).collect();
        let d2 = pairwise_squared_distances(&feats);
        let cal = calibrate_perplexity(&d2, 60, 15.0, 1e-4, 50).unwrap();
        for i in 0..60 {
            let sum: f64 = cal.conditional[i * 60..(i + 1) * 60].iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "row {i} sums to {sum}");
            assert_eq!(cal.conditional[i * 60 + i], 0.0);
        }
        assert!(cal.unconverged.is_empty());
    }

    #[test]
    fn calibration_hits_target_perplexity() {
        let mut rng = RngStream::new(72, 0);
        let feats: Vec<Vec<f64>> = (0..200).map(|_| rng.normal_vec(16)).collect();
        let d2 = pairwise_squared_distances(&feats);
        let cal = calibrate_perplexity(&d2, 200, 30.0, 1e-4, 50).unwrap();
        for (i, h) in cal.entropy.iter().enumerate() {
            let achieved = h.exp2();
            assert!((achieved - 30.0).abs() <= 1e-3 + 0.02, "row {i}: {achieved}");
        }
    }

    #[test]
    fn joint_matrix_invariants() {
        let mut rng = RngStream::new(73, 0);
        let feats: Vec<Vec<f64>> = (0..40).map(|_| rng.normal_vec(8)).collect();
        let d2 = pairwise_squared_distances(&feats);
        let cal = calibrate_perplexity(&d2, 40, 10.0, 1e-4, 50).unwrap();
        let p = joint_probabilities(&cal.conditional, 40);
        let mut total = 0.0;
        for i in 0..40 {
            assert_eq!(p[i * 40 + i], 0.0);
            for j in 0..40 {
                assert!(p[i * 40 + j] >= 0.0);
                assert_eq!(p[i * 40 + j], p[j * 40 + i]);
                total += p[i * 40 + j];
            }
        }
        assert!((total - 1.0).abs() < 1e-9, "total mass {total}");
    }

    #[test]
    fn symmetric_conditional_gives_p_over_n() {
        // For a symmetric conditional matrix, p_ij = p(j|i)/n.
        let n = 6;
        let d2 = equidistant_simplex(n);
        let cal = calibrate_perplexity(&d2, n, 4.0, 1e-4, 50).unwrap();
        let p = joint_probabilities(&cal.conditional, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let want = cal.conditional[i * n + j] / n as f64;
                    assert!((p[i * n + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kl_zero_when_q_equals_p() {
        // Equilateral triangle in the embedding with matching P: construct P
        // from the embedding's own Student-t affinities.
        let y = vec![0.0, 0.0, 1.0, 0.0, 0.5, (3.0f64).sqrt() / 2.0];
        let n = 3;
        let mut num = vec![0.0; 9];
        let mut z = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let dx = y[i * 2] - y[j * 2];
                    let dy = y[i * 2 + 1] - y[j * 2 + 1];
                    let v = 1.0 / (1.0 + dx * dx + dy * dy);
                    num[i * 3 + j] = v;
                    z += v;
                }
            }
        }
        let p: Vec<f64> = num.iter().map(|v| v / z).collect();
        let (kl, grad) = kl_and_gradient(&p, &y, n, 2);
        assert!(kl.abs() < 1e-9, "kl {kl}");
        assert!(grad.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(74, 0);
        let n = 12;
        let feats: Vec<Vec<f64>> = (0..n).map(|_| rng.normal_vec(4)).collect();
        let d2 = pairwise_squared_distances(&feats);
        let cal = calibrate_perplexity(&d2, n, 5.0, 1e-4, 50).unwrap();
        let p = joint_probabilities(&cal.conditional, n);
        let y: Vec<f64> = rng.normal_vec(n * 2);
        let (_, grad) = kl_and_gradient(&p, &y, n, 2);
        let h = 1e-6;
        for idx in 0..n * 2 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[idx] += h;
            ym[idx] -= h;
            let (klp, _) = kl_and_gradient(&p, &yp, n, 2);
            let (klm, _) = kl_and_gradient(&p, &ym, n, 2);
            let fd = (klp - klm) / (2.0 * h);
            let denom = grad[idx].abs().max(fd.abs()).max(1e-8);
            assert!(
                ((grad[idx] - fd) / denom).abs() < 1e-5,
                "idx {idx}: analytic {} vs fd {fd}",
                grad[idx]
            );
        }
    }

    #[test]
    fn kl_nonnegative() {
        let mut rng = RngStream::new(75, 0);
        let n = 10;
        let feats: Vec<Vec<f64>> = (0..n).map(|_| rng.normal_vec(3)).collect();
        let d2 = pairwise_squared_distances(&feats);
        let cal = calibrate_perplexity(&d2, n, 4.0, 1e-4, 50).unwrap();
        let p = joint_probabilities(&cal.conditional, n);
        for _ in 0..5 {
            let y: Vec<f64> = rng.normal_vec(n * 2);
            let (kl, _) = kl_and_gradient(&p, &y, n, 2);
            assert!(kl >= -1e-12, "kl {kl}");
        }
    }

    fn three_clusters(per: usize, sep: f64, rng: &mut RngStream) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..per {
                let mut f = rng.normal_vec(8);
                f[c % 8] += sep;
                f[(c + 3) % 8] += sep * (c as f64);
                feats.push(f);
                labels.push(c);
            }
        }
        (feats, labels)
    }

    #[test]
    fn descent_reduces_kl_and_separates_clusters() {
        let mut rng = RngStream::new(76, 0);
        let (feats, labels) = three_clusters(20, 10.0, &mut rng);
        let cfg = TsneConfig {
            perplexity: 10.0,
            iterations: 400,
            exaggeration_iters: 100,
            momentum_switch: 100,
            ..TsneConfig::default()
        };
        let mut stream = RngStream::new(7, 7);
        let res = run_tsne(&feats, &cfg, &mut stream).unwrap();
        assert!(res.kl_trace.last().unwrap() < res.kl_trace.first().unwrap());

        // 1-NN purity in the embedding.
        let n = feats.len();
        let mut correct = 0;
        for i in 0..n {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dx = res.embedding[i * 2] - res.embedding[j * 2];
                let dy = res.embedding[i * 2 + 1] - res.embedding[j * 2 + 1];
                let d = dx * dx + dy * dy;
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if labels[best] == labels[i] {
                correct += 1;
            }
        }
        assert!(correct as f64 / n as f64 >= 0.95);

        // Mean-centering: column means ~ 0.
        for d in 0..2 {
            let mean: f64 = (0..n).map(|i| res.embedding[i * 2 + d]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn identical_seeds_identical_embeddings() {
        let mut rng = RngStream::new(77, 0);
        let (feats, _) = three_clusters(10, 8.0, &mut rng);
        let cfg = TsneConfig {
            perplexity: 8.0,
            iterations: 50,
            ..TsneConfig::default()
        };
        let mut s1 = RngStream::new(42, 1);
        let mut s2 = RngStream::new(42, 1);
        let a = run_tsne(&feats, &cfg, &mut s1).unwrap();
        let b = run_tsne(&feats, &cfg, &mut s2).unwrap();
        let ab: Vec<u64> = a.embedding.iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u64> = b.embedding.iter().map(|v| v.to_bits()).collect();
        assert_eq!(ab, bb);
    }

    #[test]
    fn invalid_perplexity_rejected() {
        let d2 = equidistant_simplex(10);
        assert!(calibrate_perplexity(&d2, 10, 9.5, 1e-4, 50).is_err());
        assert!(calibrate_perplexity(&d2, 10, 0.5, 1e-4, 50).is_err());
    }

    #[test]
    fn embedding_csv_roundtrip() {
        let dir = std::env::temp_dir().join("leafnet_tsne_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("embedding.csv");
        write_embedding_csv(
            &path,
            &["a.ppm".into(), "b.ppm".into()],
            &[0.5, -1.25, 3.0, 4.5],
            &["rust".into(), "healthy".into()],
            &[Some("low".into()), None],
        )
        .unwrap();
        let rows = read_embedding_csv(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, "a.ppm");
        assert_eq!(rows[0].1, 0.5);
        assert_eq!(rows[1].4, None);
        assert_eq!(rows[0].4.as_deref(), Some("low"));
    }
}
