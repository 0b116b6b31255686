use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use semunc::decomposition::calibrate_tau;
use semunc::formats::{self, LabelRecord};
use semunc::providers::remote::{HttpTransport, RecordingTransport, ReplayTransport, Transport};
use semunc::providers::{disambiguate as run_disambiguation, EndpointConfig};
use semunc::regimes::{self, RegimeError, RegimeThresholds};
use semunc::synth::{self, ScenarioKind, ScenarioSpec};
use semunc::*;
use serde_json::json;

use crate::error::CliError;
use crate::manifest::ManifestBuilder;
use crate::{
    CalibrateArgs, ComputeArgs, DisambiguateArgs, EndpointArgs, EvalArgs, JudgeArg, KindArg, LabelArgs, ProviderKind,
    RegimesArgs, ResidualArg, SimulateArgs, TaskArg,
};

type Recorder = Arc<RecordingTransport<Arc<dyn Transport>>>;

fn build_judge(e: &EndpointArgs) -> Result<(LlmJudge, Option<Recorder>), CliError> {
    let (config, transport): (EndpointConfig, Arc<dyn Transport>) = match &e.replay {
        Some(path) => {
            let config = EndpointConfig {
                url: format!("replay:{}", path.display()),
                model: e.model.clone(),
                backoff_base_ms: 0,
                ..Default::default()
            };
            (config, Arc::new(ReplayTransport::from_path(path)?))
        }
        None => {
            let config = EndpointConfig::from_env(e.model.clone())?;
            let http = HttpTransport::new(config.url.clone(), config.api_key.clone(), Duration::from_secs(config.timeout_secs))?;
            (config, Arc::new(http))
        }
    };
    let config = EndpointConfig {
        max_in_flight: e.max_in_flight.max(1),
        requests_per_minute: e.requests_per_minute,
        structured_output: e.structured_output,
        ..config
    };
    match &e.record {
        Some(_) => {
            let rec: Recorder = Arc::new(RecordingTransport::new(transport));
            Ok((LlmJudge::new(config, Box::new(rec.clone())), Some(rec)))
        }
        None => Ok((LlmJudge::new(config, Box::new(transport)), None)),
    }
}

fn save_recording(e: &EndpointArgs, rec: Option<Recorder>) -> Result<(), CliError> {
    if let (Some(path), Some(rec)) = (&e.record, rec) {
        rec.save(path)?;
    }
    Ok(())
}

fn spectral_config(tau: f64, epsilon: f64, residual: ResidualArg) -> Result<SpectralConfig, CliError> {
    let residual = match residual {
        ResidualArg::Correlation => ResidualGraph::Correlation,
        ResidualArg::Raw => ResidualGraph::Raw,
    };
    let cfg = SpectralConfig { tau, epsilon, residual, ..SpectralConfig::default() };
    cfg.validate().map_err(CliError::usage)?;
    Ok(cfg)
}

fn read_dataset(path: &Path) -> Result<Vec<GenerationRecord>, CliError> {
    let mut records: Vec<GenerationRecord> = formats::read_jsonl(path)?;
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.question_id.clone()) {
            return Err(CliError::data(format!("{}: duplicate question_id {:?}", path.display(), r.question_id)));
        }
    }
    records.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    Ok(records)
}

pub fn compute(args: ComputeArgs) -> Result<(), CliError> {
    let cfg = spectral_config(args.tau, args.epsilon, args.residual)?;
    if args.workers == 0 {
        return Err(CliError::usage("--workers must be >= 1"));
    }
    if !(0.0..=1.0).contains(&args.mock_noise) {
        return Err(CliError::usage("--mock-noise must be in [0, 1]"));
    }
    let task = SimilarityTask::builtin(match args.task {
        TaskArg::Generic => TaskKind::Generic,
        TaskArg::SqlEquivalence => TaskKind::SqlEquivalence,
        TaskArg::FactualAnswerEquivalence => TaskKind::FactualAnswerEquivalence,
    });

    let mut manifest_inputs = vec![args.dataset.clone()];
    let mut recorder = None;
    let provider: Box<dyn SimilarityProvider> = match args.provider {
        ProviderKind::Mock => Box::new(MockProvider::new(args.seed).with_noise(args.mock_noise)),
        ProviderKind::Matrix => {
            let path = args.matrix.clone().ok_or_else(|| CliError::usage("--provider matrix needs --matrix <file>"))?;
            manifest_inputs.push(path.clone());
            Box::new(MatrixProvider::from_path(&path)?)
        }
        ProviderKind::Llm => {
            if let Some(replay) = &args.endpoint.replay {
                manifest_inputs.push(replay.clone());
            }
            let (judge, rec) = build_judge(&args.endpoint)?;
            recorder = rec;
            Box::new(judge)
        }
    };
    let records = read_dataset(&args.dataset)?;

    let mut manifest = ManifestBuilder::new(
        "compute",
        json!({
            "tau": cfg.tau,
            "epsilon": cfg.epsilon,
            "residual": cfg.residual,
            "task": task.kind,
            "provider": provider.id(),
            "seed": args.seed,
        }),
    );
    for p in &manifest_inputs {
        manifest.input(p)?;
    }
    let outputs = vec![args.out.clone()];
    // marked partial until every record has been written
    manifest.write(&outputs, true)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| CliError::data(format!("thread pool: {e}")))?;
    let file = File::create(&args.out).map_err(|e| CliError::data(format!("{}: {e}", args.out.display())))?;
    let mut out = BufWriter::new(file);
    let chunk = args.workers * 8;
    for batch in records.chunks(chunk) {
        let results: Vec<Result<EntropyReport, CliError>> = pool.install(|| {
            batch
                .par_iter()
                .map(|rec| {
                    let system = assemble_system(rec, provider.as_ref(), &task, AssemblyOptions::default())?;
                    Ok(decompose(&system, &cfg)?)
                })
                .collect()
        });
        for result in results {
            match result {
                Ok(report) => formats::write_jsonl_to(&mut out, &[report])?,
                Err(e) => {
                    out.flush()?;
                    save_recording(&args.endpoint, recorder)?;
                    return Err(e);
                }
            }
        }
        out.flush()?;
    }
    drop(out);
    save_recording(&args.endpoint, recorder)?;
    manifest.write(&outputs, false)
}

pub fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let calibration = calibrate_tau(args.n, &args.grid, args.threshold)?;
    println!("{}", serde_json::to_string(&calibration).expect("serialisable"));
    formats::write_json(&args.out, &calibration)?;
    let manifest = ManifestBuilder::new(
        "calibrate",
        json!({"baseline_n": args.n, "grid": args.grid, "threshold_bits": args.threshold}),
    );
    manifest.write(&[args.out], false)
}

/// Failure labels aligned with `reports`, if a label source was given.
fn resolve_labels(
    args: &LabelArgs,
    reports: &[EntropyReport],
    manifest: &mut ManifestBuilder,
) -> Result<Option<Vec<bool>>, CliError> {
    let by_id: HashMap<String, bool> = if let Some(path) = &args.labels {
        manifest.input(path)?;
        let labels: Vec<LabelRecord> = formats::read_jsonl(path)?;
        labels.into_iter().map(|l| (l.question_id, l.failure)).collect()
    } else if let Some(path) = &args.dataset {
        manifest.input(path)?;
        let records = read_dataset(path)?;
        let (judge, recorder): (Box<dyn CorrectnessJudge>, _) = match args.judge {
            JudgeArg::Exact => (Box::new(ExactMatchJudge), None),
            JudgeArg::Llm => {
                let (judge, rec) = build_judge(&args.endpoint)?;
                (Box::new(judge), rec)
            }
        };
        let wanted: HashSet<&str> = reports.iter().map(|r| r.question_id.as_str()).collect();
        let labels = records
            .iter()
            .filter(|r| wanted.contains(r.question_id.as_str()))
            .map(|r| Ok((r.question_id.clone(), label_failure(r, args.eta, judge.as_ref())?)))
            .collect::<Result<HashMap<_, _>, CliError>>();
        save_recording(&args.endpoint, recorder)?;
        labels?
    } else {
        return Ok(None);
    };
    reports
        .iter()
        .map(|r| {
            by_id.get(&r.question_id).copied().ok_or_else(|| CliError::data(format!("no label for question {:?}", r.question_id)))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn regime_error(e: RegimeError) -> CliError {
    match e {
        RegimeError::SingleClass | RegimeError::EmptySubset => {
            CliError::new("degenerate_labels", crate::error::exit::DEGENERATE_LABELS, e)
        }
        _ => CliError::data(e),
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    out.with_file_name(name)
}

pub fn regimes(args: RegimesArgs) -> Result<(), CliError> {
    let reports: Vec<EntropyReport> = formats::read_jsonl(&args.reports)?;
    let mut manifest = ManifestBuilder::new("regimes", json!(null));
    manifest.input(&args.reports)?;
    let mut outputs = vec![args.out.clone()];

    let (thresholds, fitted) = match &args.thresholds {
        Some(path) => {
            manifest.input(path)?;
            (formats::read_json::<RegimeThresholds>(path)?, false)
        }
        None => (regimes::fit_thresholds(&reports).map_err(regime_error)?, true),
    };
    let labels = resolve_labels(&args.labels, &reports, &mut manifest)?;

    let labelled: Vec<EntropyReport> = reports
        .iter()
        .map(|r| EntropyReport { regime: Some(classify(r, &thresholds)), ..r.clone() })
        .collect();
    formats::write_jsonl(&args.out, &labelled)?;

    if fitted {
        let path = args.thresholds_out.clone().unwrap_or_else(|| sidecar(&args.out, ".thresholds.json"));
        formats::write_json(&path, &thresholds)?;
        outputs.push(path);
    }
    if let Some(failures) = &labels {
        let table = regimes::regime_table(&reports, failures, &thresholds).map_err(regime_error)?;
        let ab = match regimes::ab_analysis(&reports, failures, &thresholds) {
            Ok(ab) => json!(ab),
            Err(e) => json!({ "unavailable": e.to_string() }),
        };
        let path = sidecar(&args.out, ".stats.json");
        formats::write_json(&path, &json!({ "table": table, "ab_analysis": ab }))?;
        outputs.push(path);
    }
    manifest.set_config(json!({
        "thresholds": thresholds,
        "thresholds_fitted": fitted,
        "scope": thresholds.scope,
        "eta": labels.as_ref().and(args.labels.dataset.as_ref()).map(|_| args.labels.eta),
    }));
    manifest.write(&outputs, false)
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let cfg = EvaluationConfig { eta: args.labels.eta, bootstrap_b: args.bootstrap_b, seed: args.seed, ci_level: args.ci_level };
    cfg.validate()?;
    let reports: Vec<EntropyReport> = formats::read_jsonl(&args.reports)?;
    let mut manifest = ManifestBuilder::new("eval", json!(cfg));
    manifest.input(&args.reports)?;
    let failures = resolve_labels(&args.labels, &reports, &mut manifest)?
        .ok_or_else(|| CliError::usage("eval needs --labels or --dataset"))?;
    let summary = evaluate(&reports, &failures, &cfg)?;
    formats::write_json(&args.out, &summary)?;
    manifest.write(&[args.out], false)
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let matrix_out = args.matrix_out.clone().unwrap_or_else(|| {
        let stem = args.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        args.out.with_file_name(format!("{stem}.matrix.jsonl"))
    });
    let mut records = Vec::with_capacity(args.n_questions);
    let mut matrices = Vec::with_capacity(args.n_questions);
    for k in 0..args.n_questions {
        let kind = match args.kind {
            KindArg::Confident => ScenarioKind::Confident,
            KindArg::Ambiguity => ScenarioKind::Ambiguity,
            KindArg::Instability => ScenarioKind::Instability,
            KindArg::Compound => ScenarioKind::Compound,
            KindArg::Mixed => ScenarioKind::ALL[k % 4],
        };
        let spec = ScenarioSpec {
            kind,
            n_interpretations: args.n_interpretations,
            answers_per_interpretation: args.answers_per_interpretation,
            noise: args.noise,
            seed: synth::question_seed(args.seed, k as u64),
        };
        let planted = synth::plant_scenario(&spec).map_err(CliError::usage)?;
        let (record, matrix) = synth::scenario_records(&planted, &format!("q{k:05}"));
        records.push(record);
        matrices.push(matrix);
    }
    if args.n_questions == 0 {
        // still validate the flags
        let spec = ScenarioSpec {
            noise: args.noise,
            n_interpretations: args.n_interpretations,
            answers_per_interpretation: args.answers_per_interpretation,
            ..ScenarioSpec::new(ScenarioKind::Confident, args.seed)
        };
        spec.validate().map_err(CliError::usage)?;
    }
    formats::write_jsonl(&args.out, &records)?;
    formats::write_jsonl(&matrix_out, &matrices)?;
    let manifest = ManifestBuilder::new(
        "simulate",
        json!({
            "kind": format!("{:?}", args.kind).to_lowercase(),
            "n_questions": args.n_questions,
            "noise": args.noise,
            "seed": args.seed,
            "n_interpretations": args.n_interpretations,
            "answers_per_interpretation": args.answers_per_interpretation,
        }),
    );
    manifest.write(&[args.out, matrix_out], false)
}

pub fn disambiguate(args: DisambiguateArgs) -> Result<(), CliError> {
    let (judge, recorder) = build_judge(&args.endpoint)?;
    let mut manifest = ManifestBuilder::new(
        "disambiguate",
        json!({"model": args.endpoint.model, "max_rounds": args.max_rounds, "endpoint": judge.config().url}),
    );
    if let Some(replay) = &args.endpoint.replay {
        manifest.input(replay)?;
    }
    let trace = run_disambiguation(&args.question, &judge, args.max_rounds);
    save_recording(&args.endpoint, recorder)?;
    let trace = trace.map_err(|e| match e {
        semunc::ProviderError::EmptyText(_) | semunc::ProviderError::Config(_) => CliError::usage(e),
        other => CliError::provider(other),
    })?;
    formats::write_json(&args.out, &trace)?;
    manifest.write(&[args.out], false)
}
