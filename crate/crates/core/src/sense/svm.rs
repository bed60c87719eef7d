//! Small support-vector classifiers and nested cross-validation.
//!
//! Linear machines are trained by full-batch subgradient descent on the
//! regularized hinge loss (Pegasos step sizes). RBF machines are trained by
//! coordinate ascent on the dual with the bias folded into the kernel as
//! `K + 1`, which removes the equality constraint. Features are
//! standardized with statistics of the training rows only.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{substream, Stream};

pub const TOLERANCE: f64 = 1e-4;
pub const MAX_EPOCHS: usize = 10_000;
pub const C_GRID: [f64; 6] = [0.01, 0.1, 1.0, 2.0, 5.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
}

/// Kernel-major grid: every linear setting, then every RBF setting.
pub fn default_grid() -> Vec<SvmParams> {
    [Kernel::Linear, Kernel::Rbf]
        .into_iter()
        .flat_map(|kernel| C_GRID.into_iter().map(move |c| SvmParams { kernel, c }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Standardizer { mean, scale }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Machine {
    /// Weights with the bias as the last component.
    Linear {
        w: Vec<f64>,
    },
    Rbf {
        gamma: f64,
        support: Vec<Vec<f64>>,
        /// `alpha_i * y_i` for each support row.
        coef: Vec<f64>,
    },
    Constant(bool),
}

/// A trained binary classifier over `bool` labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    params: SvmParams,
    standardizer: Standardizer,
    machine: Machine,
}

fn sign(label: bool) -> f64 {
    if label {
        1.0
    } else {
        -1.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-gamma * d).exp()
}

fn fit_linear(x: &[Vec<f64>], y: &[f64], c: f64) -> Vec<f64> {
    let n = x.len();
    let d = x[0].len() + 1;
    let lambda = 1.0 / (c * n as f64);
    let aug: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().copied().chain(std::iter::once(1.0)).collect())
        .collect();
    let objective = |w: &[f64]| {
        let hinge: f64 = aug
            .iter()
            .zip(y)
            .map(|(r, yi)| (1.0 - yi * dot(w, r)).max(0.0))
            .sum();
        0.5 * lambda * dot(w, w) + hinge / n as f64
    };
    let mut w = vec![0.0; d];
    let mut best = (objective(&w), w.clone());
    let mut grad = vec![0.0; d];
    for t in 1..=MAX_EPOCHS {
        let eta = 1.0 / (lambda * t as f64);
        grad.iter_mut().zip(&w).for_each(|(g, wi)| *g = lambda * wi);
        for (r, yi) in aug.iter().zip(y) {
            if yi * dot(&w, r) < 1.0 {
                for (g, v) in grad.iter_mut().zip(r) {
                    *g -= yi * v / n as f64;
                }
            }
        }
        let mut step = 0.0f64;
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= eta * g;
            step = step.max((eta * g).abs());
        }
        // projection onto the ball that contains the optimum
        let norm = dot(&w, &w).sqrt();
        let radius = 1.0 / lambda.sqrt();
        if norm > radius {
            w.iter_mut().for_each(|wi| *wi *= radius / norm);
        }
        let obj = objective(&w);
        if obj < best.0 {
            best = (obj, w.clone());
        }
        if step < TOLERANCE {
            break;
        }
    }
    best.1
}

fn fit_rbf(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> Vec<f64> {
    let n = x.len();
    let k: Vec<Vec<f64>> = x
        .iter()
        .map(|a| x.iter().map(|b| rbf(gamma, a, b) + 1.0).collect())
        .collect();
    let mut alpha = vec![0.0; n];
    // f[i] = sum_j alpha_j y_j K'(i, j)
    let mut f = vec![0.0; n];
    for _ in 0..MAX_EPOCHS {
        let mut violation = 0.0f64;
        for i in 0..n {
            let g = y[i] * f[i] - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            violation = violation.max(pg.abs());
            if pg == 0.0 {
                continue;
            }
            let new = (alpha[i] - g / k[i][i]).clamp(0.0, c);
            let delta = (new - alpha[i]) * y[i];
            if delta != 0.0 {
                for (fj, kj) in f.iter_mut().zip(&k[i]) {
                    *fj += delta * kj;
                }
            }
            alpha[i] = new;
        }
        if violation < TOLERANCE {
            break;
        }
    }
    alpha.iter().zip(y).map(|(a, yi)| a * yi).collect()
}

impl Svm {
    pub fn fit(x: &[Vec<f64>], y: &[bool], params: SvmParams) -> Svm {
        assert_eq!(x.len(), y.len(), "one label per row");
        assert!(!x.is_empty(), "at least one training row");
        let standardizer = Standardizer::fit(x);
        let z: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
        let machine = if y.iter().all(|&l| l == y[0]) {
            Machine::Constant(y[0])
        } else {
            let ys: Vec<f64> = y.iter().map(|&l| sign(l)).collect();
            match params.kernel {
                Kernel::Linear => Machine::Linear {
                    w: fit_linear(&z, &ys, params.c),
                },
                Kernel::Rbf => {
                    let d = z[0].len().max(1) as f64;
                    let all: Vec<f64> = z.iter().flatten().copied().collect();
                    let m = all.iter().sum::<f64>() / all.len().max(1) as f64;
                    let var =
                        all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / all.len().max(1) as f64;
                    let gamma = if var > 0.0 { 1.0 / (d * var) } else { 1.0 };
                    let coef = fit_rbf(&z, &ys, params.c, gamma);
                    let (support, coef): (Vec<_>, Vec<_>) =
                        z.into_iter().zip(coef).filter(|(_, a)| *a != 0.0).unzip();
                    Machine::Rbf {
                        gamma,
                        support,
                        coef,
                    }
                }
            }
        };
        Svm {
            params,
            standardizer,
            machine,
        }
    }

    pub fn params(&self) -> SvmParams {
        self.params
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        let z = self.standardizer.apply(row);
        match &self.machine {
            Machine::Linear { w } => dot(&w[..z.len()], &z) + w[z.len()],
            Machine::Rbf {
                gamma,
                support,
                coef,
            } => support
                .iter()
                .zip(coef)
                .map(|(s, a)| a * (rbf(*gamma, s, &z) + 1.0))
                .sum(),
            Machine::Constant(l) => sign(*l),
        }
    }

    pub fn predict(&self, row: &[f64]) -> bool {
        self.decision(row) >= 0.0
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[bool]) -> f64 {
        let hits = x
            .iter()
            .zip(y)
            .filter(|(r, &l)| self.predict(r) == l)
            .count();
        hits as f64 / y.len() as f64
    }
}

/// Stratified fold assignment: each class is shuffled and dealt
/// round-robin, continuing the deal across classes.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = substream(seed, Stream::Folds);
    let mut fold = vec![0; y.len()];
    let mut next = 0;
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub grid: Vec<SvmParams>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            outer_folds: 5,
            inner_folds: 4,
            seed: 0,
            grid: default_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Mean of the per-fold outer accuracies.
    pub outer_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    /// Configuration chosen by the inner search in each outer fold.
    pub selected: Vec<SvmParams>,
    /// Configuration chosen on all data and used for the refit.
    pub refit_params: SvmParams,
    /// Training accuracy of the refit classifier.
    pub refit_accuracy: f64,
}

fn subset<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Grid search by k-fold cross-validated accuracy; ties go to the earlier
/// grid entry.
pub fn grid_search(
    x: &[Vec<f64>],
    y: &[bool],
    grid: &[SvmParams],
    k: usize,
    seed: u64,
) -> SvmParams {
    let folds = stratified_folds(y, k, seed);
    let mut best: Option<(f64, SvmParams)> = None;
    for &params in grid {
        let mut acc = 0.0;
        for f in 0..k {
            let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
            if test.is_empty() || train.is_empty() {
                continue;
            }
            let m = Svm::fit(&subset(x, &train), &subset(y, &train), params);
            acc += m.accuracy(&subset(x, &test), &subset(y, &test)) * test.len() as f64;
        }
        let acc = acc / y.len() as f64;
        if best.is_none_or(|(b, _)| acc > b) {
            best = Some((acc, params));
        }
    }
    best.expect("non-empty grid").1
}

/// Nested cross-validation followed by a refit on all rows.
pub fn nested_cv(x: &[Vec<f64>], y: &[bool], cfg: &CvConfig) -> (Svm, CvReport) {
    nested_cv_with(x, y, cfg, |_, _| {})
}

/// [`nested_cv`] with a hook that may rewrite each outer test fold's rows
/// after all training for that fold is done.
pub fn nested_cv_with<F>(
    x: &[Vec<f64>],
    y: &[bool],
    cfg: &CvConfig,
    mut test_hook: F,
) -> (Svm, CvReport)
where
    F: FnMut(usize, &mut Vec<Vec<f64>>),
{
    let folds = stratified_folds(y, cfg.outer_folds, cfg.seed);
    let mut fold_accuracies = Vec::new();
    let mut selected = Vec::new();
    for f in 0..cfg.outer_folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let (tx, ty) = (subset(x, &train), subset(y, &train));
        let inner_seed = cfg.seed.wrapping_add(1 + f as u64);
        let params = grid_search(&tx, &ty, &cfg.grid, cfg.inner_folds, inner_seed);
        let model = Svm::fit(&tx, &ty, params);
        let mut test_x = subset(x, &test);
        test_hook(f, &mut test_x);
        fold_accuracies.push(model.accuracy(&test_x, &subset(y, &test)));
        selected.push(params);
    }
    let outer_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    let refit_params = grid_search(x, y, &cfg.grid, cfg.inner_folds, cfg.seed);
    let model = Svm::fit(x, y, refit_params);
    let refit_accuracy = model.accuracy(x, y);
    (
        model,
        CvReport {
            outer_accuracy,
            fold_accuracies,
            selected,
            refit_params,
            refit_accuracy,
        },
    )
}
