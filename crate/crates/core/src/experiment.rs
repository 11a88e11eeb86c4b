//! Seeded synthetic instances and convergence sweeps of the saddle algorithm
//! on the minimum-variance problem.
//!
//! Random streams: every instance draws from `ChaCha20Rng::seed_from_u64(seed)`
//! with stream [`STREAM_MATRIX`] for the ellipsoid and [`STREAM_SAMPLES`] for
//! the nominal samples, so changing `n_samples` never changes `M`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{MomentState, NormTag, Support};
use crate::error::{Error, Result};
use crate::fw::{self, fmt_f64};
use crate::minvar::{FeasibleSet, MinVarInstance, MinVarProblem};
use crate::saddle::{run_saddle_observed, FixedX, NdroProblem, SaddleConfig};

pub const STREAM_MATRIX: u64 = 1;
pub const STREAM_SAMPLES: u64 = 2;

pub const CELL_CSV_HEADER: &str = "k,gamma,gap_est,primal_value,dual_value,primal_subopt,duality_gap,time_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportKind {
    #[default]
    Ellipsoid,
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n: usize,
    /// Defaults to `2 n`.
    pub n_samples: Option<usize>,
    pub rho_list: Vec<f64>,
    pub alpha_list: Vec<f64>,
    pub k_iterations: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub support: SupportKind,
    pub norm: NormTag,
    /// Largest allowed condition number of the random ellipsoid matrix.
    pub cond_cap: f64,
    pub dual_eval_iters: usize,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            n: 25,
            n_samples: None,
            rho_list: vec![0.1, 0.5, 1.0],
            alpha_list: vec![0.0],
            k_iterations: 75,
            epsilon: 1e-3,
            delta: 0.0,
            support: SupportKind::Ellipsoid,
            norm: NormTag::L2,
            cond_cap: 10.0,
            dual_eval_iters: 75,
            out_dir: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn n_samples(&self) -> usize {
        self.n_samples.unwrap_or(2 * self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Validation(format!("n = {} must be >= 2", self.n)));
        }
        if self.n_samples() < 1 {
            return Err(Error::Validation("n_samples must be >= 1".into()));
        }
        if self.rho_list.is_empty() || self.alpha_list.is_empty() {
            return Err(Error::Validation("rho_list and alpha_list must be nonempty".into()));
        }
        if let Some(r) = self.rho_list.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::Validation(format!("rho = {r} must be finite and >= 0")));
        }
        if let Some(a) = self.alpha_list.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return Err(Error::Validation(format!("alpha = {a} must be finite and >= 0")));
        }
        if !(self.cond_cap >= 1.0) || !self.cond_cap.is_finite() {
            return Err(Error::Validation(format!("cond_cap = {} must be >= 1", self.cond_cap)));
        }
        if !(self.epsilon > 0.0) || !(self.delta >= 0.0) {
            return Err(Error::Validation("need epsilon > 0 and delta >= 0".into()));
        }
        if self.support == SupportKind::Ellipsoid && self.norm != NormTag::L2 {
            return Err(Error::Validation("ellipsoid support requires the l2 norm".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Validation("jobs must be >= 1".into()));
        }
        Ok(())
    }
}

fn stream(seed: u64, label: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

/// Random symmetric positive definite matrix `Q diag(l) Q^T` with eigenvalues
/// log-uniform in `[1/cap, 1]` (so the ellipsoid contains the unit ball) and
/// `Q` Haar-distributed.
pub fn random_ellipsoid_matrix(n: usize, cap: f64, rng: &mut ChaCha20Rng) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let ln_cap = cap.ln();
    let eig: Vec<f64> = (0..n).map(|_| (-rng.random::<f64>() * ln_cap).exp()).collect();
    let m = &q * DMatrix::from_diagonal(&DVector::from_vec(eig.clone())) * q.transpose();
    (crate::linalg::symmetrize(&m), q, eig)
}

/// `count` points uniform in `{xi : xi^T M xi <= 1}` for `M = Q diag(l) Q^T`.
pub fn uniform_in_ellipsoid(count: usize, q: &DMatrix<f64>, eig: &[f64], rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let n = eig.len();
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(n, eig.iter().map(|l| 1.0 / l.sqrt())));
    let map = q * scale * q.transpose();
    (0..count)
        .map(|_| {
            let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = crate::linalg::norm2(&g);
            let r = rng.random::<f64>().powf(1.0 / n as f64);
            let z: Vec<f64> = g.iter().map(|v| r * v / norm).collect();
            crate::linalg::mat_vec(&map, &z)
        })
        .collect()
}

/// Deterministic instance for the configuration (radius from the first
/// entry of `rho_list`, regularizer from the first of `alpha_list`).
pub fn generate_instance(config: &ExperimentConfig) -> Result<MinVarInstance> {
    config.validate()?;
    let n = config.n;
    let (m, q, eig) = random_ellipsoid_matrix(n, config.cond_cap, &mut stream(config.seed, STREAM_MATRIX));
    let samples = uniform_in_ellipsoid(config.n_samples(), &q, &eig, &mut stream(config.seed, STREAM_SAMPLES));
    let support = match config.support {
        SupportKind::Ellipsoid => Support::ellipsoid(&m),
        SupportKind::Unconstrained => Support::Unconstrained,
    };
    MinVarInstance::new(
        samples,
        config.rho_list[0],
        2,
        config.norm,
        support,
        FeasibleSet::Simplex,
        config.alpha_list[0],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub k: usize,
    pub gamma: f64,
    pub gap_est: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    pub primal_subopt: f64,
    pub duality_gap: f64,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTrace {
    pub rho: f64,
    pub alpha: f64,
    pub rows: Vec<CellRow>,
    /// Largest primal value of the cell, the stand-in for the unknown optimum.
    pub v_star_proxy: f64,
}

impl CellTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CELL_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.k,
                fmt_f64(r.gamma),
                fmt_f64(r.gap_est),
                fmt_f64(r.primal_value),
                fmt_f64(r.dual_value),
                fmt_f64(r.primal_subopt),
                fmt_f64(r.duality_gap),
                fmt_f64(r.time_ms)
            )?;
        }
        Ok(())
    }

    pub fn final_row(&self) -> &CellRow {
        self.rows.last().expect("cells have at least one row")
    }
}

/// `sup_P F(x, P)` estimated by `iters` fixed-`x` FW steps from `start`.
pub fn dual_value<N: NdroProblem>(problem: &N, x: &[f64], start: &N::State, iters: usize) -> Result<f64> {
    let fixed = FixedX { problem, x };
    Ok(fw::run_fw_iterations(&fixed, start.clone(), iters)?.best_value())
}

/// One sweep cell: `k_iterations + 1` iterations of the saddle algorithm on
/// the instance at `(rho, alpha)`, plus a dual evaluation at every iterate.
///
/// The algorithm runs on the `alpha`-regularized objective, but the recorded
/// primal `min_x V(x, P_k)` and dual `sup_P V(x_k, P)` are those of the plain
/// variance objective, so a regularization bias shows up as a duality gap.
pub fn run_cell(base: &MinVarInstance, rho: f64, alpha: f64, config: &ExperimentConfig) -> Result<CellTrace> {
    let inst = base.with_rho(rho)?.with_reg_alpha(alpha)?;
    let plain = MinVarProblem::new(inst.with_reg_alpha(0.0)?)?;
    let problem = MinVarProblem::new(inst)?;
    let k = config.k_iterations;
    let saddle_cfg = SaddleConfig {
        epsilon: config.epsilon,
        delta: config.delta,
        smoothness_c: None,
        k_override: Some(k),
        iteration_cap: Some(k),
    };
    let mut iterates: Vec<(Vec<f64>, MomentState)> = Vec::with_capacity(k + 1);
    let res = run_saddle_observed(&problem, problem.nominal_state(), &saddle_cfg, |_, x, p| {
        iterates.push((x.to_vec(), p.clone()));
        Ok(None)
    })?;
    let values: Vec<(f64, f64)> = iterates
        .par_iter()
        .map(|(x, p)| {
            let primal = if alpha == 0.0 {
                None
            } else {
                Some(plain.inner_min(p)?.1)
            };
            let dual = dual_value(&plain, x, p, config.dual_eval_iters)?;
            Ok((primal.unwrap_or(f64::NAN), dual))
        })
        .collect::<Result<_>>()?;
    let primal: Vec<f64> = res
        .records
        .iter()
        .zip(&values)
        .map(|(r, &(p, _))| if alpha == 0.0 { r.primal_value } else { p })
        .collect();
    let v_star = primal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rows = res
        .records
        .iter()
        .zip(&values)
        .zip(&primal)
        .map(|((r, &(_, d)), &pv)| CellRow {
            k: r.k,
            gamma: r.gamma,
            gap_est: r.gap_est,
            primal_value: pv,
            dual_value: d,
            primal_subopt: v_star - pv,
            duality_gap: d - pv,
            time_ms: r.time_ms,
        })
        .collect();
    Ok(CellTrace {
        rho,
        alpha,
        rows,
        v_star_proxy: v_star,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub rho: f64,
    pub alpha: f64,
    pub iterations: usize,
    /// Gap estimate at the last iterate.
    pub certificate: Option<f64>,
    pub final_primal: Option<f64>,
    pub final_dual: Option<f64>,
    pub status: String,
    pub csv: String,
    pub v_star_proxy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub cells: Vec<CellSummary>,
    /// How `primal_subopt` is referenced.
    pub primal_subopt_reference: String,
}

pub fn cell_file_name(rho: f64, alpha: f64) -> String {
    format!("cell_rho{rho}_alpha{alpha}.csv")
}

/// Runs every `(rho, alpha)` cell, writing one CSV per cell and
/// `summary.json` into `out_dir`. A failing cell is recorded in the summary
/// and does not stop the others.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(ExperimentSummary, Vec<Result<CellTrace>>)> {
    config.validate()?;
    let base = generate_instance(config)?;
    fs::create_dir_all(&config.out_dir)?;
    let cells: Vec<(f64, f64)> = config
        .rho_list
        .iter()
        .flat_map(|&r| config.alpha_list.iter().map(move |&a| (r, a)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    let traces: Vec<Result<CellTrace>> =
        pool.install(|| cells.par_iter().map(|&(r, a)| run_cell(&base, r, a, config)).collect());

    let mut summaries = Vec::with_capacity(cells.len());
    for (&(rho, alpha), trace) in cells.iter().zip(&traces) {
        let name = cell_file_name(rho, alpha);
        let summary = match trace {
            Ok(t) => {
                write_cell(&config.out_dir.join(&name), t)?;
                let last = t.final_row();
                CellSummary {
                    rho,
                    alpha,
                    iterations: t.rows.len(),
                    certificate: Some(last.gap_est),
                    final_primal: Some(last.primal_value),
                    final_dual: Some(last.dual_value),
                    status: "ok".into(),
                    csv: name,
                    v_star_proxy: Some(t.v_star_proxy),
                }
            }
            Err(e) => CellSummary {
                rho,
                alpha,
                iterations: 0,
                certificate: None,
                final_primal: None,
                final_dual: None,
                status: format!("error: {e}"),
                csv: name,
                v_star_proxy: None,
            },
        };
        summaries.push(summary);
    }
    let summary = ExperimentSummary {
        cells: summaries,
        primal_subopt_reference: "proxy: largest primal value recorded in the cell".into(),
    };
    let mut f = fs::File::create(config.out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;
    Ok((summary, traces))
}

fn write_cell(path: &Path, trace: &CellTrace) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    trace.write_csv(&mut f)?;
    f.flush()?;
    Ok(())
}
