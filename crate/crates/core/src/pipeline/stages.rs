use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{PipelineError, RunConfig};
use crate::artifact::{self, Artifact, ArtifactError};
use crate::data::{build_graphs, generate_samples, split_dataset, DatasetSplit, GenerateOptions, GraphMode, GraphSet, SampleSet};
use crate::metrics::{self, VariantSummary, VerificationRecord};
use crate::milp::{solve, MilpModel, Solution, SolveOptions};
use crate::neural::{predict, train, EcModel, GraphModel, NcModel, Topology, TrainReport};
use crate::power_model::Network;
use crate::reduction::{self, oracle_plan, ReductionPlan, Variant};
use crate::scuc::{build, BuildOptions, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GenSamples,
    BuildGraphs,
    TrainNc,
    TrainEc,
    Predict,
    Reduce,
    Verify,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::GenSamples,
        Stage::BuildGraphs,
        Stage::TrainNc,
        Stage::TrainEc,
        Stage::Predict,
        Stage::Reduce,
        Stage::Verify,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenSamples => "gen-samples",
            Stage::BuildGraphs => "build-graphs",
            Stage::TrainNc => "train-nc",
            Stage::TrainEc => "train-ec",
            Stage::Predict => "predict",
            Stage::Reduce => "reduce",
            Stage::Verify => "verify",
            Stage::Report => "report",
        }
    }
}

/// Per-invocation switches that do not change results and so stay out of
/// the config hash.
#[derive(Debug, Clone, Default)]
pub struct StageOptions {
    /// Restrict `verify` to one variant; all three otherwise.
    pub variant: Option<Variant>,
    pub allow_mixed: bool,
    /// `reduce` builds plans from the solved labels instead of predictions.
    pub oracle: bool,
}

/// Artifact paths under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    fn file(&self, dir: &str, name: &str) -> PathBuf {
        self.root.join(dir).join(name)
    }

    pub fn samples(&self) -> PathBuf {
        self.file("samples", "samples.json")
    }

    pub fn graphs(&self, mode: GraphMode) -> PathBuf {
        match mode {
            GraphMode::Nc => self.file("graphs", "graphs_nc.json"),
            GraphMode::Ec => self.file("graphs", "graphs_ec.json"),
        }
    }

    pub fn split(&self) -> PathBuf {
        self.file("graphs", "split.json")
    }

    pub fn model(&self, mode: GraphMode) -> PathBuf {
        match mode {
            GraphMode::Nc => self.file("models", "nc_model.json"),
            GraphMode::Ec => self.file("models", "ec_model.json"),
        }
    }

    pub fn history(&self, mode: GraphMode, ext: &str) -> PathBuf {
        let tag = match mode {
            GraphMode::Nc => "nc",
            GraphMode::Ec => "ec",
        };
        self.file("reports", &format!("history_{tag}.{ext}"))
    }

    pub fn predictions(&self) -> PathBuf {
        self.file("plans", "predictions.json")
    }

    pub fn plan(&self, sample: usize) -> PathBuf {
        self.file("plans", &format!("plan_{sample}.json"))
    }

    pub fn accuracy(&self) -> PathBuf {
        self.file("reports", "accuracy.json")
    }

    pub fn verify(&self, variant: Variant, ext: &str) -> PathBuf {
        self.file("reports", &format!("verify_{}.{ext}", variant.slug()))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.file("reports", name)
    }
}

/// Test-split probabilities for one sample, `rows x T` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub sample: usize,
    /// Commitment probabilities, `G x T`.
    pub nc: Vec<Vec<f64>>,
    /// Critical-loading probabilities, `E x T`.
    pub ec: Vec<Vec<f64>>,
    pub nc_wrong: usize,
    pub ec_wrong: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub nc_accuracy: f64,
    pub ec_accuracy: f64,
    pub samples: Vec<SamplePrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub sample: usize,
    /// `"predicted"` or `"oracle"`.
    pub source: String,
    pub plan: ReductionPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub nc_accuracy: Option<f64>,
    pub ec_accuracy: Option<f64>,
    pub variants: Vec<VariantSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AccuracyReport {
    nc_accuracy: f64,
    ec_accuracy: f64,
    /// `(sample, wrong NC predictions, wrong EC predictions)`
    per_sample: Vec<(usize, usize, usize)>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    opts: &'a StageOptions,
    layout: Layout,
    hash: String,
}

impl Ctx<'_> {
    fn save<T: Serialize>(&self, path: &Path, kind: &str, payload: T) -> Result<(), PipelineError> {
        Ok(artifact::save(path, &Artifact::new(kind, &self.hash, payload))?)
    }

    /// Loads an upstream artifact; with `strict`, its config hash must match
    /// the current one unless mixed inputs were allowed.
    fn load<T: DeserializeOwned>(&self, path: &Path, kind: &str, strict: bool) -> Result<T, PipelineError> {
        let a: Artifact<T> = artifact::load(path, kind)?;
        if strict && !self.opts.allow_mixed && a.config_hash != self.hash {
            return Err(PipelineError::MixedHash {
                path: path.to_path_buf(),
                found: a.config_hash,
                expected: self.hash.clone(),
            });
        }
        Ok(a.payload)
    }

    fn network(&self) -> Result<Network, PipelineError> {
        let network = Network::load(&self.cfg.case).map_err(|source| PipelineError::Case {
            path: self.cfg.case.clone(),
            source,
        })?;
        if let Some(t) = self.cfg.horizon {
            if network.horizon() != t {
                return Err(PipelineError::Config(format!(
                    "horizon {t} requested but case {} has {} periods",
                    self.cfg.case.display(),
                    network.horizon()
                )));
            }
        }
        Ok(network)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.jobs.max(1))
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            mip_gap: self.cfg.mip_gap,
            time_limit: self.cfg.time_limit,
            ..SolveOptions::default()
        }
    }
}

/// Runs one stage against the artifacts under `config.outdir`.
pub fn run_stage(stage: Stage, config: &RunConfig, options: &StageOptions) -> Result<(), PipelineError> {
    config.validate()?;
    let ctx = Ctx {
        cfg: config,
        opts: options,
        layout: Layout::new(&config.outdir),
        hash: config.hash(),
    };
    match stage {
        Stage::GenSamples => gen_samples(&ctx),
        Stage::BuildGraphs => build_graph_sets(&ctx),
        Stage::TrainNc => train_model(&ctx, GraphMode::Nc),
        Stage::TrainEc => train_model(&ctx, GraphMode::Ec),
        Stage::Predict => predict_test(&ctx),
        Stage::Reduce => reduce(&ctx),
        Stage::Verify => verify(&ctx),
        Stage::Report => report(&ctx),
    }
}

fn gen_samples(ctx: &Ctx) -> Result<(), PipelineError> {
    let network = ctx.network()?;
    let options = GenerateOptions {
        formulation: ctx.cfg.formulation,
        perturbation: ctx.cfg.perturbation,
        mip_gap: ctx.cfg.mip_gap,
        time_limit: ctx.cfg.time_limit,
        reserve_enabled: true,
    };
    let set = ctx
        .pool()?
        .install(|| generate_samples(&network, ctx.cfg.samples, &options, ctx.cfg.seed))?;
    ctx.save(&ctx.layout.samples(), "samples", set)
}

fn build_graph_sets(ctx: &Ctx) -> Result<(), PipelineError> {
    let network = ctx.network()?;
    let samples: SampleSet = ctx.load(&ctx.layout.samples(), "samples", false)?;
    for mode in [GraphMode::Nc, GraphMode::Ec] {
        let set = build_graphs(&samples, &network, mode)?;
        ctx.save(&ctx.layout.graphs(mode), &graphs_kind(mode), set)?;
    }
    let split = split_dataset(samples.len(), ctx.cfg.split, ctx.cfg.seed.wrapping_add(1))?;
    ctx.save(&ctx.layout.split(), "split", split)
}

fn graphs_kind(mode: GraphMode) -> String {
    match mode {
        GraphMode::Nc => "graphs_nc".into(),
        GraphMode::Ec => "graphs_ec".into(),
    }
}

fn model_kind(mode: GraphMode) -> &'static str {
    match mode {
        GraphMode::Nc => "nc_model",
        GraphMode::Ec => "ec_model",
    }
}

fn history_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
    for r in &report.history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
        ));
    }
    out
}

fn train_model(ctx: &Ctx, mode: GraphMode) -> Result<(), PipelineError> {
    let graphs: GraphSet = ctx.load(&ctx.layout.graphs(mode), &graphs_kind(mode), false)?;
    let split: DatasetSplit = ctx.load(&ctx.layout.split(), "split", false)?;
    let first = graphs
        .graphs
        .first()
        .ok_or_else(|| PipelineError::Config("graph set is empty".into()))?;
    let topology = Topology::of(first);
    let mut train_cfg = ctx.cfg.train.clone();
    // training stays on one worker; results do not depend on it either way
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let report = match mode {
        GraphMode::Nc => {
            let mut model = NcModel::new(ctx.cfg.nc.clone(), topology, graphs.generator_bus.clone())?;
            let report = pool.install(|| train(&mut model, &graphs, &split, &train_cfg))?;
            ctx.save(&ctx.layout.model(mode), model_kind(mode), model)?;
            report
        }
        GraphMode::Ec => {
            train_cfg.pos_weight = ctx.cfg.ec_pos_weight;
            train_cfg.seed = train_cfg.seed.wrapping_add(1);
            let mut model = EcModel::new(ctx.cfg.ec.clone(), topology)?;
            let report = pool.install(|| train(&mut model, &graphs, &split, &train_cfg))?;
            ctx.save(&ctx.layout.model(mode), model_kind(mode), model)?;
            report
        }
    };
    artifact::write_atomic(&ctx.layout.history(mode, "csv"), history_csv(&report).as_bytes())?;
    ctx.save(&ctx.layout.history(mode, "json"), "history", report)
}

fn probabilities<M: GraphModel>(
    model: &M,
    set: &GraphSet,
    test: &[usize],
) -> Result<(Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<u8>>>), PipelineError> {
    let mut probs = Vec::with_capacity(test.len());
    let mut truth = Vec::with_capacity(test.len());
    for &i in test {
        let g = set
            .graphs
            .get(i)
            .ok_or_else(|| PipelineError::Config(format!("test index {i} outside the graph set")))?;
        probs.push(predict(model, g)?);
        truth.push(g.labels.clone());
    }
    Ok((probs, truth))
}

fn predict_test(ctx: &Ctx) -> Result<(), PipelineError> {
    let split: DatasetSplit = ctx.load(&ctx.layout.split(), "split", false)?;
    let nc_set: GraphSet = ctx.load(&ctx.layout.graphs(GraphMode::Nc), "graphs_nc", false)?;
    let ec_set: GraphSet = ctx.load(&ctx.layout.graphs(GraphMode::Ec), "graphs_ec", false)?;
    let nc: NcModel = ctx.load(&ctx.layout.model(GraphMode::Nc), "nc_model", false)?;
    let ec: EcModel = ctx.load(&ctx.layout.model(GraphMode::Ec), "ec_model", false)?;

    let (nc_p, nc_y) = probabilities(&nc, &nc_set, &split.test)?;
    let (ec_p, ec_y) = probabilities(&ec, &ec_set, &split.test)?;
    let nc_c: Vec<Vec<Vec<u8>>> = nc_p.iter().map(|p| metrics::classify(p)).collect();
    let ec_c: Vec<Vec<Vec<u8>>> = ec_p.iter().map(|p| metrics::classify(p)).collect();
    let nc_accuracy = metrics::accuracy(&nc_c, &nc_y).map_err(|e| PipelineError::Config(e.to_string()))?;
    let ec_accuracy = metrics::accuracy(&ec_c, &ec_y).map_err(|e| PipelineError::Config(e.to_string()))?;

    let mut samples = Vec::new();
    let mut per_sample = Vec::new();
    for (j, &i) in split.test.iter().enumerate() {
        let nc_wrong = metrics::wrong_predictions(&nc_c[j], &nc_y[j]);
        let ec_wrong = metrics::wrong_predictions(&ec_c[j], &ec_y[j]);
        per_sample.push((i, nc_wrong, ec_wrong));
        samples.push(SamplePrediction {
            sample: i,
            nc: nc_p[j].clone(),
            ec: ec_p[j].clone(),
            nc_wrong,
            ec_wrong,
        });
    }
    ctx.save(
        &ctx.layout.accuracy(),
        "accuracy",
        AccuracyReport {
            nc_accuracy,
            ec_accuracy,
            per_sample,
        },
    )?;
    ctx.save(
        &ctx.layout.predictions(),
        "predictions",
        PredictionSet {
            nc_accuracy,
            ec_accuracy,
            samples,
        },
    )
}

fn reduce(ctx: &Ctx) -> Result<(), PipelineError> {
    let th = ctx.cfg.thresholds;
    let records: Vec<PlanRecord> = if ctx.opts.oracle {
        let network = ctx.network()?;
        let samples: SampleSet = ctx.load(&ctx.layout.samples(), "samples", false)?;
        let split: DatasetSplit = ctx.load(&ctx.layout.split(), "split", false)?;
        split
            .test
            .iter()
            .map(|&i| {
                let s = &samples.samples[i];
                let mut plan = oracle_plan(&network, &s.commitment, &s.flows);
                plan.thresholds = th;
                PlanRecord {
                    sample: i,
                    source: "oracle".into(),
                    plan,
                }
            })
            .collect()
    } else {
        let preds: PredictionSet = ctx.load(&ctx.layout.predictions(), "predictions", false)?;
        preds
            .samples
            .iter()
            .map(|p| {
                Ok(PlanRecord {
                    sample: p.sample,
                    source: "predicted".into(),
                    plan: ReductionPlan {
                        variables: Some(reduction::plan_variable_reduction(&p.nc, &th)?),
                        inactive_lines: Some(reduction::plan_constraint_reduction(&p.ec, &th)?),
                        thresholds: th,
                    },
                })
            })
            .collect::<Result<_, PipelineError>>()?
    };
    for r in records {
        let path = ctx.layout.plan(r.sample);
        ctx.save(&path, "plan", r)?;
    }
    Ok(())
}

/// Solves `model` `repeats` times and keeps the first solution with the
/// median solve time.
fn timed_solve(model: &MilpModel, opts: &SolveOptions, repeats: usize) -> Solution {
    let mut first = solve(model, opts);
    if repeats > 1 {
        let mut times = vec![first.solve_time];
        times.extend((1..repeats).map(|_| solve(model, opts).solve_time));
        times.sort_by(f64::total_cmp);
        first.solve_time = times[times.len() / 2];
    }
    first
}

fn verify(ctx: &Ctx) -> Result<(), PipelineError> {
    let network = ctx.network()?;
    let samples: SampleSet = ctx.load(&ctx.layout.samples(), "samples", true)?;
    let split: DatasetSplit = ctx.load(&ctx.layout.split(), "split", true)?;
    let plans: Vec<PlanRecord> = split
        .test
        .iter()
        .map(|&i| ctx.load(&ctx.layout.plan(i), "plan", true))
        .collect::<Result<_, _>>()?;
    let variants: Vec<Variant> = match ctx.opts.variant {
        Some(v) => vec![v],
        None => Variant::ALL.to_vec(),
    };
    let solve_opts = ctx.solve_options();
    let repeats = ctx.cfg.timing_repeats;
    let formulation = ctx.cfg.formulation;

    let per_sample = |rec: &PlanRecord| -> Result<Vec<VerificationRecord>, PipelineError> {
        let sample = samples
            .samples
            .get(rec.sample)
            .ok_or_else(|| PipelineError::Config(format!("plan refers to missing sample {}", rec.sample)))?;
        let base_model = build(&network, &sample.demand, &BuildOptions::new(formulation))?;
        let base = timed_solve(&base_model, &solve_opts, repeats);
        if !base.has_solution() {
            return Err(PipelineError::BaseSolve {
                sample: rec.sample,
                status: format!("{:?}", base.status),
            });
        }
        let wrong = rec.plan.variables.as_ref().map_or(0, |v| {
            v.fixed
                .iter()
                .chain(&v.warm)
                .filter(|(&(g, t), &on)| (sample.commitment[g][t] == 1) != on)
                .count()
        });
        let mut out = Vec::new();
        for &variant in &variants {
            let model = match reduction::assemble(variant, &rec.plan, &network, &sample.demand, formulation) {
                Ok(m) => Some(m),
                // contradictory fixings make the reduced model infeasible by construction
                Err(reduction::ReductionError::Build(crate::scuc::BuildError::InconsistentFixing { .. })) => None,
                Err(e) => return Err(e.into()),
            };
            let solved = model.as_ref().map(|m| (m, timed_solve(m, &solve_opts, repeats)));
            let (feasible, reduced_cost, reduced_time, violations) = match &solved {
                Some((m, sol)) if sol.has_solution() => {
                    let schedule = Schedule::extract(&network, m, sol);
                    let removed = match variant {
                        Variant::Vr => Default::default(),
                        _ => rec.plan.inactive_lines.clone().unwrap_or_default(),
                    };
                    let v = reduction::verify_reduced_solution(&schedule.dispatch, &network, &sample.demand, &removed)?;
                    (true, Some(sol.objective), sol.solve_time, v.len())
                }
                Some((_, sol)) => (false, None, sol.solve_time, 0),
                None => (false, None, 0.0, 0),
            };
            let base_time = base.solve_time.max(f64::MIN_POSITIVE);
            let signed = metrics::bnts_signed(base_time, reduced_time).unwrap_or(0.0);
            out.push(VerificationRecord {
                sample: rec.sample,
                variant: variant.to_string(),
                feasible,
                base_cost: base.objective,
                base_time: base.solve_time,
                reduced_cost,
                reduced_time,
                bnc: reduced_cost.and_then(|c| metrics::bnc(base.objective, c).ok()),
                bnts: signed.abs(),
                bnts_signed: signed,
                wrong_predictions: wrong,
                violations,
            });
        }
        Ok(out)
    };

    let results: Vec<Result<Vec<VerificationRecord>, PipelineError>> =
        ctx.pool()?.install(|| plans.par_iter().map(per_sample).collect());
    let mut by_variant: BTreeMap<usize, Vec<VerificationRecord>> = BTreeMap::new();
    for r in results {
        for (k, rec) in r?.into_iter().enumerate() {
            by_variant.entry(k).or_default().push(rec);
        }
    }
    for (k, variant) in variants.iter().enumerate() {
        let records = by_variant.remove(&k).unwrap_or_default();
        artifact::write_atomic(&ctx.layout.verify(*variant, "csv"), metrics::records_csv(&records).as_bytes())?;
        ctx.save(&ctx.layout.verify(*variant, "json"), "verification", records)?;
    }
    Ok(())
}

fn report(ctx: &Ctx) -> Result<(), PipelineError> {
    let mut variants = Vec::new();
    for v in Variant::ALL {
        let path = ctx.layout.verify(v, "json");
        if !path.exists() {
            continue;
        }
        let records: Vec<VerificationRecord> = ctx.load(&path, "verification", false)?;
        variants.push(metrics::summarize(&v.to_string(), &records));
    }
    if variants.is_empty() {
        return Err(PipelineError::NothingToReport(ctx.layout.root.join("reports")));
    }
    let accuracy: Option<AccuracyReport> = match ctx.load(&ctx.layout.accuracy(), "accuracy", false) {
        Ok(a) => Some(a),
        Err(PipelineError::Artifact(ArtifactError::Io { .. })) => None,
        Err(e) => return Err(e),
    };

    let mut text = String::from("Verification of reduced models on the test split\n\n");
    text.push_str(&metrics::summary_table(&variants));
    if let Some(acc) = &accuracy {
        text.push_str(&format!(
            "\nCommitment prediction accuracy (NC): {:.4}\nCritical-line prediction accuracy (EC): {:.4}\n",
            acc.nc_accuracy, acc.ec_accuracy
        ));
        let nc: Vec<usize> = acc.per_sample.iter().map(|r| r.1).collect();
        let ec: Vec<usize> = acc.per_sample.iter().map(|r| r.2).collect();
        let (hn, he) = (metrics::error_histogram(&nc), metrics::error_histogram(&ec));
        artifact::write_atomic(&ctx.layout.report("hist_nc.csv"), metrics::histogram_csv(&hn).as_bytes())?;
        artifact::write_atomic(&ctx.layout.report("hist_ec.csv"), metrics::histogram_csv(&he).as_bytes())?;
        text.push_str("\nWrong NC predictions per sample\n");
        text.push_str(&metrics::histogram_text(&hn));
        text.push_str("\nWrong EC predictions per sample\n");
        text.push_str(&metrics::histogram_text(&he));
    }
    artifact::write_atomic(&ctx.layout.report("summary.txt"), text.as_bytes())?;
    ctx.save(
        &ctx.layout.report("summary.json"),
        "summary",
        Summary {
            nc_accuracy: accuracy.as_ref().map(|a| a.nc_accuracy),
            ec_accuracy: accuracy.as_ref().map(|a| a.ec_accuracy),
            variants,
        },
    )
}
