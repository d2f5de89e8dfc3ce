use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use scorefuse::embedscore::{batch_score, load_embeddings, load_pair_list, ScoreMetric};
use scorefuse::fusion::{
    apply_fusion, estimate_pcc_weights, train_perceptron, FusionMethod, FusionParams,
    FusionWeights, PerceptronHyper, WeightProvenance,
};
use scorefuse::metrics::{
    correlation_matrix, report_from_curves, MetricsReport, ThresholdCurves, REPORT_METRICS,
};
use scorefuse::protocol::{
    aggregate_results, check_leakage, run_grid, ExperimentKind, ExperimentResult, GridOptions,
    GroupBy, MethodSpec, Recipe, Summary,
};
use scorefuse::scorebase::{
    align_tables, load_score_table, normalize_scores, write_score_table, NormalizeMethod,
    Partition,
};
use scorefuse::synthlab::{
    generate_panel, generate_scores, make_complementary_matchers, GaussianScoreModel, PanelSpec,
};
use scorefuse::{AlignedScores, Error, Result, ScoreRange, ScoreTable, SettingDescriptor, TOOL_VERSION};

use crate::artifact::{digest_inputs, in_file, to_json, write_atomic, Provenance};
use crate::cli::*;
use crate::config::{ExperimentConfig, FileSource, ScoreEntry};

fn table_csv(table: &ScoreTable, prov: &Provenance) -> Result<Vec<u8>> {
    prov.csv(|out| write_score_table(table, out))
}

fn load_unit_tables(paths: &[PathBuf]) -> Result<Vec<ScoreTable>> {
    paths
        .iter()
        .map(|p| load_score_table(p, ScoreRange::UNIT).map_err(in_file(p)))
        .collect()
}

fn load_aligned(paths: &[PathBuf]) -> Result<AlignedScores> {
    align_tables(&load_unit_tables(paths)?)
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let (refs, probes) = load_embeddings(&args.embeddings)
        .map_err(in_file(&args.embeddings))?;
    let pairs =
        load_pair_list(&args.pairs).map_err(in_file(&args.pairs))?;
    if pairs.is_empty() {
        return Err(Error::contract("no comparisons to score in the pair list"));
    }
    let metric = match args.metric {
        MetricArg::Euclidean => ScoreMetric::EuclideanPosterior,
        MetricArg::Cosine => ScoreMetric::Cosine,
    };
    let mut table = batch_score(&args.matcher_id, &refs, &probes, &pairs, metric)?;
    if args.normalize == NormalizeArg::Unit {
        table = normalize_scores(&table, NormalizeMethod::AffineToUnit)?;
    }
    let prov = Provenance::new(
        args.seed,
        digest_inputs([args.embeddings.as_path(), args.pairs.as_path()])?,
    );
    write_atomic(&args.out, &table_csv(&table, &prov)?)
}

fn method_name(m: FuseMethodArg) -> &'static str {
    match m {
        FuseMethodArg::Avg => "avg",
        FuseMethodArg::Bayes => "bayes",
        FuseMethodArg::PccAvg => "pcc_avg",
        FuseMethodArg::Weighted => "weighted",
        FuseMethodArg::Perceptron => "perceptron",
    }
}

pub fn fuse(args: &FuseArgs) -> Result<()> {
    let name = method_name(args.method);
    let test = load_aligned(&args.scores)?;
    let validation = if args.validation.is_empty() {
        None
    } else {
        let v = load_aligned(&args.validation)?.select(test.matcher_ids())?;
        check_leakage(&v, &test)?;
        Some(v)
    };
    let fitted_params = match &args.params {
        Some(p) => Some(FusionParams::load(p)?.into_method()?),
        None => None,
    };
    let needs_validation = || {
        validation.as_ref().ok_or_else(|| {
            Error::contract(format!(
                "validation scores required for `{name}`; pass --validation or --params"
            ))
        })
    };

    let method = match (args.method, fitted_params) {
        (FuseMethodArg::Avg, _) => FusionMethod::Average,
        (FuseMethodArg::Bayes, _) => FusionMethod::Bayesian {
            epsilon: args.epsilon,
        },
        (FuseMethodArg::Weighted, _) => {
            if args.weights.is_empty() {
                return Err(Error::contract("--method weighted needs --weights"));
            }
            FusionMethod::Weighted(FusionWeights::new(
                test.matcher_ids().to_vec(),
                args.weights.clone(),
                WeightProvenance::Manual,
            )?)
        }
        (FuseMethodArg::PccAvg | FuseMethodArg::Perceptron, Some(loaded)) => {
            let expected = match args.method {
                FuseMethodArg::Perceptron => "perceptron",
                _ => "weights",
            };
            let ok = matches!(
                (&loaded, args.method),
                (FusionMethod::Perceptron(_), FuseMethodArg::Perceptron)
                    | (FusionMethod::Weighted(_), FuseMethodArg::PccAvg)
            );
            if !ok {
                return Err(Error::contract(format!(
                    "--params does not hold {expected} parameters"
                )));
            }
            loaded
        }
        (FuseMethodArg::PccAvg, None) => {
            FusionMethod::Weighted(estimate_pcc_weights(needs_validation()?)?)
        }
        (FuseMethodArg::Perceptron, None) => {
            let hyper = PerceptronHyper {
                learning_rate: args.learning_rate,
                max_epochs: args.max_epochs,
                seed: args.seed,
                ..PerceptronHyper::default()
            };
            FusionMethod::Perceptron(train_perceptron(needs_validation()?, &hyper)?)
        }
    };

    let method_id = args.method_id.clone().unwrap_or_else(|| name.to_string());
    let fused = apply_fusion(&method, &method_id, &test)?;

    let mut inputs: Vec<&Path> = args.scores.iter().map(PathBuf::as_path).collect();
    inputs.extend(args.validation.iter().map(PathBuf::as_path));
    inputs.extend(args.params.as_deref());
    let prov = Provenance::new(args.seed, digest_inputs(inputs)?);
    write_atomic(&args.out, &table_csv(&fused.table, &prov)?)?;

    if let (Some(params), true) = (
        FusionParams::from_method(&method),
        matches!(args.method, FuseMethodArg::PccAvg | FuseMethodArg::Perceptron),
    ) {
        let path = args.params_out.clone().unwrap_or_else(|| {
            let mut p = args.out.clone().into_os_string();
            p.push(".params.json");
            PathBuf::from(p)
        });
        if let FusionParams::Weights(w) = &params {
            for warning in &w.warnings {
                eprintln!("warning: {warning}");
            }
        }
        write_atomic(&path, &prov.json(&params)?)?;
    }
    Ok(())
}

fn format_metric(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(v) => format!("{v:.precision$}"),
        None => "n/a".into(),
    }
}

#[derive(Serialize)]
struct EvalReport<'a> {
    matcher_id: &'a str,
    metrics: &'a MetricsReport,
    /// The metrics rounded for display.
    display: BTreeMap<&'static str, String>,
}

pub fn eval(args: &EvalArgs) -> Result<String> {
    let range = ScoreRange::new(args.range[0], args.range[1])?;
    let table = load_score_table(&args.scores, range)
        .map_err(in_file(&args.scores))?;
    let (scores, labels) = (table.scores(), table.labels());
    let curves = ThresholdCurves::from_table(&table)?;
    let report = report_from_curves(&curves, &scores, &labels)?;
    let display = REPORT_METRICS
        .iter()
        .map(|(name, get)| (*name, format_metric(get(&report), args.precision)))
        .collect();

    let prov = Provenance::new(args.seed, digest_inputs([args.scores.as_path()])?);
    let body = EvalReport {
        matcher_id: table.matcher_id(),
        metrics: &report,
        display,
    };
    write_atomic(&args.out_dir.join("report.json"), &prov.json(&body)?)?;
    let csv = |f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| {
        prov.csv(|out| f(out).map_err(|e| Error::io("<csv>", e)))
    };
    write_atomic(&args.out_dir.join("curves.csv"), &csv(&|out| curves.write_csv(out))?)?;
    write_atomic(&args.out_dir.join("roc.csv"), &csv(&|out| curves.roc().write_csv(out))?)?;

    let mut text = String::new();
    let _ = writeln!(text, "matcher,{}", REPORT_METRICS.map(|(n, _)| n).join(","));
    let _ = writeln!(
        text,
        "{},{}",
        table.matcher_id(),
        REPORT_METRICS
            .iter()
            .map(|(_, get)| format_metric(get(&report), args.precision))
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(text)
}

pub fn correlate(args: &CorrelateArgs) -> Result<()> {
    if args.scores.len() < 2 {
        return Err(Error::contract(format!(
            "need ≥ 2 matchers to correlate, got {}",
            args.scores.len()
        )));
    }
    let aligned = load_aligned(&args.scores)?;
    let matrix = correlation_matrix(&aligned)?;
    let inputs: Vec<&Path> = args.scores.iter().map(PathBuf::as_path).collect();
    let prov = Provenance::new(args.seed, digest_inputs(inputs)?);
    let bytes = prov.csv(|out| matrix.write_csv(out).map_err(|e| Error::io(&args.out, e)))?;
    write_atomic(&args.out, &bytes)
}

/// File-name-safe form of a setting.
pub fn setting_slug(s: &SettingDescriptor) -> String {
    format!("{}_{}_{}m", s.dataset_id(), s.camera_id(), s.distance_m())
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn result_file_name(r: &ExperimentResult) -> String {
    format!(
        "{}__{}__{}.json",
        setting_slug(&r.item.train_setting),
        setting_slug(&r.item.test_setting),
        r.method_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
            .collect::<String>()
    )
}

#[derive(Serialize)]
struct Versioned<'a, T> {
    tool_version: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Serialize)]
struct GridSummary<'a> {
    plan_counts: BTreeMap<&'static str, usize>,
    by_method: &'a Summary,
    by_method_kind: &'a Summary,
    by_method_distance: &'a Summary,
    failures: &'a [scorefuse::protocol::CellFailure],
}

fn summary_csv(summary: &Summary, prov: &Provenance, precision: usize) -> Result<Vec<u8>> {
    prov.csv(|out| {
        summary
            .write_csv(out, Some(precision))
            .map_err(|e| Error::io("<summary>", e))
    })
}

/// Human-readable table of the per-method means.
pub fn render_summary(summary: &Summary, precision: usize) -> String {
    let names: Vec<&str> = REPORT_METRICS.iter().map(|(n, _)| *n).collect();
    let width = summary.rows.iter().map(|r| r.method_id.len()).max().unwrap_or(6).max(6);
    let mut text = format!("{:<width$}", "method");
    for n in &names {
        let _ = write!(text, " {n:>16}");
    }
    text.push('\n');
    for row in &summary.rows {
        let _ = write!(text, "{:<width$}", row.method_id);
        for m in &row.metrics {
            let _ = write!(text, " {:>16}", format_metric(m.mean, precision));
        }
        text.push('\n');
    }
    text
}

pub fn grid(args: &GridArgs) -> Result<String> {
    let config = ExperimentConfig::load(&args.config)?;
    let source = FileSource::new(&config)?;
    let options = GridOptions {
        seed: config.seed,
        kinds: config.kinds.clone(),
        validation_scope: config.validation_scope,
        jobs: args.jobs,
        keep_going: args.keep_going,
    };
    let outcome = run_grid(&config.settings(), &config.methods, &source, &options)?;
    if outcome.results.is_empty() {
        return Err(Error::contract("every grid cell failed"));
    }
    let out_dir = match &args.out_dir {
        Some(d) => d.clone(),
        None => config.resolve(&config.output_dir),
    };

    for r in &outcome.results {
        let body = Versioned {
            tool_version: TOOL_VERSION,
            body: r,
        };
        write_atomic(&out_dir.join("results").join(result_file_name(r)), &to_json(&body)?)?;
    }

    let by_method = aggregate_results(&outcome.results, GroupBy::Method)?;
    let by_kind = aggregate_results(&outcome.results, GroupBy::MethodKind)?;
    let by_distance = aggregate_results(&outcome.results, GroupBy::MethodDistance)?;
    let mut inputs = BTreeMap::new();
    for r in &outcome.results {
        inputs.extend(r.provenance.clone());
    }
    let mut config_inputs = digest_inputs([args.config.as_path()])?;
    inputs.append(&mut config_inputs);
    let prov = Provenance::new(config.seed, inputs);

    let p = config.report_precision;
    write_atomic(&out_dir.join("summary.csv"), &summary_csv(&by_method, &prov, p)?)?;
    write_atomic(&out_dir.join("summary_by_kind.csv"), &summary_csv(&by_kind, &prov, p)?)?;
    write_atomic(&out_dir.join("summary_by_distance.csv"), &summary_csv(&by_distance, &prov, p)?)?;
    let plan_counts = ExperimentKind::ALL
        .iter()
        .map(|&k| (k.as_str(), outcome.plan.count(k)))
        .filter(|&(_, n)| n > 0)
        .collect();
    let summary = GridSummary {
        plan_counts,
        by_method: &by_method,
        by_method_kind: &by_kind,
        by_method_distance: &by_distance,
        failures: &outcome.failures,
    };
    write_atomic(&out_dir.join("summary.json"), &prov.json(&summary)?)?;

    let mut text = render_summary(&by_method, p);
    for f in &outcome.failures {
        let _ = writeln!(text, "failed: method `{}` on {}: {}", f.method_id, f.item, f.error);
    }
    Ok(text)
}

fn gaussian_model(args: &GaussianArgs) -> Result<GaussianScoreModel> {
    let mut model = match &args.model {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.clone(),
                source,
            })?
        }
        None => GaussianScoreModel::symmetric(0.3, 0.6, 0.1, 1000, 0),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field.clone() {
                model.$field = v;
            }
        )*};
    }
    set!(mu_nonmated, sigma_nonmated, mu_mated, sigma_mated, n_mated, n_nonmated, seed, matcher_id);
    model.clamp |= args.clamp;
    model.validate()?;
    Ok(model)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    match &args.command {
        SynthCommand::Gaussian(a) => {
            let model = gaussian_model(a)?;
            let table = generate_scores(&model)?;
            let prov = Provenance::new(model.seed, digest_inputs(a.model.as_deref())?);
            write_atomic(&a.out, &table_csv(&table, &prov)?)
        }
        SynthCommand::Complementary(a) => {
            let aligned = make_complementary_matchers(a.separation, a.n, a.seed)?;
            let prov = Provenance::new(a.seed, BTreeMap::new());
            for j in 0..aligned.n_matchers() {
                let table = aligned.to_table(j);
                let path = a.out_dir.join(format!("{}.csv", table.matcher_id()));
                write_atomic(&path, &table_csv(&table, &prov)?)?;
            }
            Ok(())
        }
        SynthCommand::Demo(a) => write_demo(a.seed, &a.out_dir).map(|_| ()),
    }
}

/// The fusion methods of the demo config, over every non-baseline matcher.
pub fn demo_methods(spec: &PanelSpec) -> Vec<MethodSpec> {
    let ids: Vec<String> = spec.matchers.iter().map(|m| m.matcher_id.clone()).collect();
    let fused: Vec<String> = ids.iter().filter(|id| *id != "baseline").cloned().collect();
    let mut methods: Vec<MethodSpec> = ids.iter().map(MethodSpec::single).collect();
    for (id, recipe) in [
        ("fused_avg", Recipe::Avg),
        (
            "fused_bayes",
            Recipe::Bayes {
                epsilon: scorefuse::fusion::DEFAULT_BAYES_EPSILON,
            },
        ),
        ("fused_pcc_avg", Recipe::PccAvg),
        (
            "fused_perceptron",
            Recipe::Perceptron {
                hyper: PerceptronHyper::default(),
            },
        ),
    ] {
        methods.push(MethodSpec {
            method_id: id.into(),
            matchers: fused.clone(),
            recipe,
        });
    }
    methods
}

/// Write the demo panel's score files and a grid config that runs on them.
/// Returns the config path.
pub fn write_demo(seed: u64, out_dir: &Path) -> Result<PathBuf> {
    let spec = PanelSpec::demo(seed);
    let prov = Provenance::new(seed, BTreeMap::new());
    let mut scores = Vec::new();
    for cell in generate_panel(&spec)? {
        for table in &cell.tables {
            let rel = PathBuf::from("scores").join(table.matcher_id()).join(format!(
                "{}_{}.csv",
                setting_slug(&cell.setting),
                cell.partition.as_str()
            ));
            write_atomic(&out_dir.join(&rel), &table_csv(table, &prov)?)?;
            scores.push(ScoreEntry {
                matcher_id: table.matcher_id().to_string(),
                setting: cell.setting.clone(),
                partition: cell.partition,
                path: rel,
            });
        }
    }
    let config = ExperimentConfig {
        seed,
        output_dir: PathBuf::from("results"),
        kinds: [
            ExperimentKind::Intra,
            ExperimentKind::CrossDistance,
            ExperimentKind::CrossCamera,
            ExperimentKind::CrossBoth,
        ]
        .into_iter()
        .collect(),
        validation_scope: Default::default(),
        report_precision: 2,
        scores,
        methods: demo_methods(&spec),
        base_dir: PathBuf::new(),
    };
    config.validate()?;
    let path = out_dir.join("experiment.json");
    write_atomic(&path, &to_json(&config)?)?;
    Ok(path)
}

/// Score files of the demo for one setting and partition, in matcher order.
pub fn demo_files(out_dir: &Path, setting: &SettingDescriptor, partition: Partition) -> Vec<PathBuf> {
    let spec = PanelSpec::demo(0);
    spec.matchers
        .iter()
        .map(|m| {
            out_dir.join("scores").join(&m.matcher_id).join(format!(
                "{}_{}.csv",
                setting_slug(setting),
                partition.as_str()
            ))
        })
        .collect()
}
