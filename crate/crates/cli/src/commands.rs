use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use evoprune::ga::{self, Objective};
use evoprune::genome::{load_checkpoint, save_checkpoint};
use evoprune::metrics::{count_flops, count_sparsity};
use evoprune::mnist::{self, Dataset};
use evoprune::nn::{predict_error, NetworkArch};
use evoprune::{FitnessWeights, Genome};
use log::info;

use crate::config::RunConfig;
use crate::curves::{CurveRow, CurveWriter};
use crate::error::{io_error, CliError, CliResult};

pub const CURVES_FILE: &str = "curves.csv";
pub const ELITE_FILE: &str = "elite.ckpt";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const BASELINE_METRICS_FILE: &str = "baseline.txt";
pub const SUMMARY_HEADER: &str =
    "lambda1,lambda2,lambda3,error,computation,sparsity,accuracy_change";

/// Final test-set figures of a pruned network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub weights: FitnessWeights,
    pub error: f64,
    pub computation: f64,
    pub sparsity: f64,
    /// Test accuracy of the pruned network minus that of the baseline.
    pub accuracy_change: f64,
}

impl SummaryRow {
    pub fn to_line(&self) -> String {
        let [l1, l2, l3] = self.weights.lambdas();
        format!(
            "{l1:.6},{l2:.6},{l3:.6},{:.6},{:.6},{:.6},{:.6}",
            self.error, self.computation, self.sparsity, self.accuracy_change
        )
    }
}

fn ensure_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn load_splits(cfg: &RunConfig) -> CliResult<(Dataset, Dataset, Dataset)> {
    let (train, test) = mnist::load_dir(&cfg.data)?;
    let (fit, validation) = mnist::split(&train, cfg.split)?;
    info!(
        "data: {} fit, {} validation, {} test images",
        fit.len(),
        validation.len(),
        test.len()
    );
    Ok((fit, validation, test))
}

fn load_test(dir: &Path) -> CliResult<Dataset> {
    Ok(mnist::load_idx(
        dir.join(mnist::TEST_IMAGES),
        dir.join(mnist::TEST_LABELS),
    )?)
}

fn test_error(g: &Genome, test: &Dataset) -> CliResult<f64> {
    Ok(predict_error(g.arch(), g.params(), g.masks(), test)?)
}

pub fn pretrain(cfg: &RunConfig) -> CliResult<PathBuf> {
    let (fit, validation, test) = load_splits(cfg)?;
    if let Some(dir) = cfg.baseline.parent() {
        create_dir(dir)?;
    }
    create_dir(&cfg.out)?;
    let start = Instant::now();
    let g = ga::pretrain(
        Arc::new(NetworkArch::lenet()),
        &fit,
        &cfg.pretrain,
        cfg.ga.seed,
    )?;
    let seconds = start.elapsed().as_secs_f64();
    let val_error = test_error(&g, &validation)?;
    let error = test_error(&g, &test)?;
    save_checkpoint(&g, &cfg.baseline)?;
    let metrics_path = cfg.out.join(BASELINE_METRICS_FILE);
    let text = format!(
        "test_error = {error:.6}\nvalidation_error = {val_error:.6}\nepochs = {}\nseconds = {seconds:.1}\n",
        cfg.pretrain.epochs
    );
    fs::write(&metrics_path, &text).map_err(|e| io_error(&metrics_path, e))?;
    println!(
        "baseline test error {error:.6} ({seconds:.0} s), saved {}",
        cfg.baseline.display()
    );
    Ok(cfg.baseline.clone())
}

pub fn prune(cfg: &RunConfig) -> CliResult<SummaryRow> {
    let weights = cfg.weights.unwrap_or_else(FitnessWeights::balanced);
    ensure_file(&cfg.baseline, "baseline checkpoint")?;
    let baseline = load_checkpoint(&cfg.baseline)?;
    let (fit, validation, test) = load_splits(cfg)?;
    create_dir(&cfg.out)?;
    let mut writer = CurveWriter::create(&cfg.out.join(CURVES_FILE))?;

    let objective = Objective {
        weights,
        fit: &fit,
        validation: &validation,
    };
    let mut write_error = None;
    let outcome = ga::run(&baseline, &cfg.ga, &objective, |record, _| {
        if write_error.is_none() {
            write_error = writer.push(&CurveRow::from(record)).err();
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    save_checkpoint(&outcome.elite, cfg.out.join(ELITE_FILE))?;

    let base_error = test_error(&baseline, &test)?;
    let error = test_error(&outcome.elite, &test)?;
    let row = SummaryRow {
        weights,
        error,
        computation: count_flops(&outcome.elite)?.fraction(),
        sparsity: count_sparsity(&outcome.elite),
        accuracy_change: base_error - error,
    };
    let summary_path = cfg.out.join(SUMMARY_FILE);
    fs::write(
        &summary_path,
        format!("{SUMMARY_HEADER}\n{}\n", row.to_line()),
    )
    .map_err(|e| io_error(&summary_path, e))?;
    println!("{SUMMARY_HEADER}\n{}", row.to_line());
    if outcome.converged {
        println!("converged after {} generations", outcome.records.len());
    }
    Ok(row)
}

/// `e`, `c`, `s` on the test set, plus `f` when a weighting is configured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub error: f64,
    pub computation: f64,
    pub sparsity: f64,
    pub fitness: Option<f64>,
}

impl EvalReport {
    pub fn lines(&self) -> String {
        let mut s = format!(
            "error = {:.6}\ncomputation = {:.6}\nsparsity = {:.6}\n",
            self.error, self.computation, self.sparsity
        );
        if let Some(f) = self.fitness {
            s.push_str(&format!("fitness = {f:.6}\n"));
        }
        s
    }
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path) -> CliResult<EvalReport> {
    ensure_file(checkpoint, "checkpoint")?;
    let g = load_checkpoint(checkpoint)?;
    let test = load_test(&cfg.data)?;
    let error = test_error(&g, &test)?;
    let computation = count_flops(&g)?.fraction();
    let sparsity = count_sparsity(&g);
    let report = EvalReport {
        error,
        computation,
        sparsity,
        fitness: cfg.weights.map(|w| w.combine(error, computation, sparsity)),
    };
    print!("{}", report.lines());
    Ok(report)
}
