//! Release gate: ten end-to-end checks with fixed seeds and tolerances.
//!
//! Everything runs inside one test so the timing checks are not disturbed by
//! other tests sharing the machine. Each check prints one PASS/FAIL line.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use scorefuse::fusion::{
    estimate_pcc_weights, fuse_average, fuse_bayesian, fuse_weighted, train_perceptron,
    FusionWeights, PerceptronHyper, WeightProvenance,
};
use scorefuse::metrics::{
    auc, build_curves, cohens_d, eer, rate_at_operating_point, OperatingPoint,
};
use scorefuse::protocol::{
    plan_experiments, run_grid, ExperimentKind, GridOptions, MemorySource, MethodSpec,
    ValidationScope,
};
use scorefuse::random::Stream;
use scorefuse::scorebase::{align_tables, Partition};
use scorefuse::synthlab::{
    analytic_auc, analytic_cohens_d, analytic_eer, brute_force_auc, brute_force_eer,
    complementary_auc, generate_panel, generate_scores, make_complementary_matchers,
    GaussianScoreModel, PanelSpec,
};
use scorefuse::{AlignedScores, Error, PairKey, SettingDescriptor};

type Outcome = Result<String, String>;
type Transform = Box<dyn Fn(f64) -> f64>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure(
        (got - want).abs() <= tol,
        format!("{name} = {got}, expected {want} ± {tol}"),
    )
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let detail = f()?;
    let took = start.elapsed();
    ensure(took < limit, format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(format!("{detail} ({took:.2?})"))
}

fn gaussian_oracles() -> Outcome {
    timed(Duration::from_secs(5), || {
        let model = GaussianScoreModel::symmetric(0.3, 0.6, 0.1, 100_000, 20240611);
        let table = generate_scores(&model).map_err(|e| e.to_string())?;
        let (s, l) = (table.scores(), table.labels());
        let curves = build_curves(&s, &l).map_err(|e| e.to_string())?;
        let (a, e) = (auc(&curves), eer(&curves));
        let d = cohens_d(&s, &l).map_err(|e| e.to_string())?;
        within("AUC", a, analytic_auc(&model).unwrap(), 0.005)?;
        within("AUC oracle", analytic_auc(&model).unwrap(), 0.98305, 1e-5)?;
        within("EER", e, analytic_eer(&model).unwrap(), 0.005)?;
        within("EER oracle", analytic_eer(&model).unwrap(), 0.06681, 1e-5)?;
        within("Cohen's d", d, analytic_cohens_d(&model).unwrap(), 0.05)?;
        Ok(format!("AUC {a:.5}, EER {e:.5}, d {d:.4}"))
    })
}

/// Random labelled score list with both classes and frequent ties.
fn random_table(rng: &mut Stream) -> (Vec<f64>, Vec<bool>) {
    let n = 2 + rng.below(499) as usize;
    let coarse = rng.below(2) == 0;
    let mut labels: Vec<bool> = (0..n).map(|_| rng.below(2) == 0).collect();
    labels[0] = true;
    labels[1] = false;
    let shift = rng.open_unit() * 0.3;
    let scores = labels
        .iter()
        .map(|&m| {
            let base = rng.open_unit() * 0.7 + if m { shift } else { 0.0 };
            if coarse {
                (base * 20.0).round() / 20.0
            } else {
                base
            }
        })
        .collect();
    (scores, labels)
}

fn brute_force_equivalence() -> Outcome {
    timed(Duration::from_secs(30), || {
        let mut rng = Stream::new(99, 2);
        let (mut worst_auc, mut worst_eer) = (0.0f64, 0.0f64);
        for i in 0..1000 {
            let (s, l) = random_table(&mut rng);
            let curves = build_curves(&s, &l).map_err(|e| e.to_string())?;
            let da = (auc(&curves) - brute_force_auc(&s, &l).unwrap()).abs();
            let de = (eer(&curves) - brute_force_eer(&s, &l).unwrap()).abs();
            ensure(da <= 1e-12, format!("table {i}: AUC differs by {da}"))?;
            ensure(de <= 1e-9, format!("table {i}: EER differs by {de}"))?;
            worst_auc = worst_auc.max(da);
            worst_eer = worst_eer.max(de);
        }
        Ok(format!("1000 tables, max |ΔAUC| {worst_auc:e}, max |ΔEER| {worst_eer:e}"))
    })
}

fn headline(s: &[f64], l: &[bool]) -> Result<[f64; 4], String> {
    let c = build_curves(s, l).map_err(|e| e.to_string())?;
    let at = |p| rate_at_operating_point(&c, p).map_err(|e| e.to_string());
    Ok([
        auc(&c),
        eer(&c),
        at(OperatingPoint::Fnmr(0.01))?,
        at(OperatingPoint::Fmr(0.01))?,
    ])
}

fn rank_invariance() -> Outcome {
    let mut rng = Stream::new(7, 3);
    for i in 0..100 {
        let (s, l) = random_table(&mut rng);
        let power = 0.3 + 2.7 * rng.open_unit();
        let gain = 0.5 + 10.0 * rng.open_unit();
        let offset = rng.open_unit() - 0.5;
        let transforms: [(&str, Transform); 3] = [
            ("power", Box::new(move |x: f64| x.powf(power))),
            ("logistic", Box::new(move |x: f64| 1.0 / (1.0 + (-gain * (x - offset)).exp()))),
            ("exp-affine", Box::new(move |x: f64| 3.0 * (gain * x).exp() - 1.0)),
        ];
        let before = headline(&s, &l)?;
        for (name, f) in &transforms {
            let t: Vec<f64> = s.iter().map(|&x| f(x)).collect();
            let after = headline(&t, &l)?;
            for (k, (a, b)) in before.iter().zip(&after).enumerate() {
                ensure(
                    (a - b).abs() <= 1e-12,
                    format!("table {i}, {name}: metric {k} moved from {a} to {b}"),
                )?;
            }
        }
    }
    Ok("100 tables × 3 transforms, all four metrics unchanged".into())
}

fn column_auc(aligned: &AlignedScores, col: &[f64]) -> Result<f64, String> {
    Ok(auc(&build_curves(col, &aligned.labels()).map_err(|e| e.to_string())?))
}

fn fusion_gain() -> Outcome {
    let aligned = make_complementary_matchers(1.0, 50_000, 31337).map_err(|e| e.to_string())?;
    let (single_oracle, fused_oracle) = complementary_auc(1.0);
    within("single oracle", single_oracle, 0.7603, 1e-4)?;
    within("fused oracle", fused_oracle, 0.8413, 1e-4)?;
    let mut singles = Vec::new();
    for j in 0..2 {
        let a = column_auc(&aligned, &aligned.column(j))?;
        within(&format!("matcher {j} AUC"), a, 0.7603, 0.01)?;
        singles.push(a);
    }
    let fused: Vec<f64> = aligned.rows().map(|r| fuse_average(r).unwrap()).collect();
    let f = column_auc(&aligned, &fused)?;
    within("fused AUC", f, 0.8413, 0.01)?;
    ensure(singles.iter().all(|&s| f > s), "fused AUC does not beat every single matcher")?;
    Ok(format!("singles {:.4} / {:.4}, fused {f:.4}", singles[0], singles[1]))
}

fn fusion_identities() -> Outcome {
    ensure(fuse_average(&[0.2, 0.4, 0.6]).unwrap() == 0.4, "avg{0.2,0.4,0.6} != 0.4")?;
    within("bayes{0.8,0.8}", fuse_bayesian(&[0.8, 0.8], 1e-6).unwrap(), 16.0 / 17.0, 1e-9)?;
    within("bayes{0.9,0.1}", fuse_bayesian(&[0.9, 0.1], 1e-6).unwrap(), 0.5, 1e-12)?;
    let w = FusionWeights::new(
        vec!["a".into(), "b".into()],
        vec![2.0, 1.0],
        WeightProvenance::Manual,
    )
    .unwrap();
    ensure(fuse_weighted(&[0.9, 0.3], &w).unwrap() == 0.7, "weighted != 0.7")?;
    within("bayes{1,0}", fuse_bayesian(&[1.0, 0.0], 1e-6).unwrap(), 0.5, 1e-6)?;
    Ok("avg, bayes ×3, weighted".into())
}

fn chance_level() -> Outcome {
    let model = GaussianScoreModel::symmetric(0.5, 0.5, 0.1, 10_000, 4242);
    let table = generate_scores(&model).map_err(|e| e.to_string())?;
    let c = build_curves(&table.scores(), &table.labels()).map_err(|e| e.to_string())?;
    let (a, e) = (100.0 * auc(&c), 100.0 * eer(&c));
    within("AUC %", a, 50.0, 1.0)?;
    within("EER %", e, 50.0, 1.0)?;
    Ok(format!("AUC {a:.2}%, EER {e:.2}%"))
}

/// Informative and label-independent matchers over the same comparisons.
fn informative_and_noise(n: usize, seed: u64) -> AlignedScores {
    let mut rng = Stream::new(seed, 0);
    let setting = SettingDescriptor::new("cam", 1.0, "synthetic").unwrap();
    let mut pairs = Vec::with_capacity(n);
    let mut informative = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for i in 0..n {
        let mated = i % 2 == 0;
        let mu = if mated { 0.65 } else { 0.35 };
        informative.push((mu + 0.1 * rng.standard_normal()).clamp(0.0, 1.0));
        noise.push((0.5 + 0.1 * rng.standard_normal()).clamp(0.0, 1.0));
        pairs.push(PairKey {
            probe_id: format!("p{i}"),
            reference_id: format!("r{i}"),
            probe_subject: format!("s{i}"),
            reference_subject: if mated { format!("s{i}") } else { format!("t{i}") },
            mated,
            setting: setting.clone(),
        });
    }
    AlignedScores::from_columns(
        vec!["informative".into(), "noise".into()],
        pairs,
        &[informative, noise],
    )
    .unwrap()
}

fn pcc_weights() -> Outcome {
    let v = informative_and_noise(2000, 17);
    let w = estimate_pcc_weights(&v).map_err(|e| e.to_string())?;

    // positive affine rescaling of each column in turn
    for j in 0..2 {
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|k| {
                let c = v.column(k);
                if k == j {
                    c.iter().map(|s| 0.25 + 0.5 * s).collect()
                } else {
                    c
                }
            })
            .collect();
        let scaled = AlignedScores::from_columns(v.matcher_ids().to_vec(), v.pairs().to_vec(), &cols)
            .unwrap();
        let w2 = estimate_pcc_weights(&scaled).unwrap();
        for (a, b) in w.weights.iter().zip(&w2.weights) {
            within("rescaled weight", *b, *a, 1e-12)?;
        }
    }

    let ratio = w.weights[0] / w.weights[1];
    ensure(ratio > 10.0, format!("informative/noise weight ratio {ratio}"))?;

    let anti: Vec<f64> = v.column(0).iter().map(|s| 1.0 - s).collect();
    let with_anti = AlignedScores::from_columns(
        vec!["informative".into(), "anti".into()],
        v.pairs().to_vec(),
        &[v.column(0), anti],
    )
    .unwrap();
    let wa = estimate_pcc_weights(&with_anti).unwrap();
    ensure(wa.weights[1] == 0.0, format!("anti-correlated weight {}", wa.weights[1]))?;
    Ok(format!("ratio {ratio:.1}, anti-correlated weight 0"))
}

fn perceptron() -> Outcome {
    timed(Duration::from_secs(10), || {
        let validation = informative_and_noise(2000, 23);
        let test = informative_and_noise(2000, 24);
        let fuser = train_perceptron(&validation, &PerceptronHyper::default())
            .map_err(|e| e.to_string())?;
        let log = &fuser.training_log;
        ensure(
            log.final_loss <= log.initial_loss,
            format!("loss rose from {} to {}", log.initial_loss, log.final_loss),
        )?;
        let (ci, cn) = (fuser.coefficients[0], fuser.coefficients[1]);
        ensure(ci.abs() > cn.abs(), format!("coefficients {ci} vs {cn}"))?;
        let fused: Vec<f64> = test.rows().map(|r| fuser.predict(r)).collect();
        let fused_auc = column_auc(&test, &fused)?;
        let alone = column_auc(&test, &test.column(0))?;
        ensure(
            fused_auc >= alone - 0.005,
            format!("fused AUC {fused_auc} vs informative alone {alone}"),
        )?;
        Ok(format!(
            "loss {:.4} -> {:.4}, coefficients {ci:.3}/{cn:.3}, AUC {fused_auc:.4} vs {alone:.4}",
            log.initial_loss, log.final_loss
        ))
    })
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scorefuse"))
}

fn run_ok(cmd: &mut Command) -> Result<String, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{cmd:?} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn protocol_grid() -> Outcome {
    let spec = PanelSpec::demo(5);
    let plan = plan_experiments(&spec.settings, &ExperimentKind::ALL.into_iter().collect())
        .map_err(|e| e.to_string())?;
    for k in [
        ExperimentKind::Intra,
        ExperimentKind::CrossDistance,
        ExperimentKind::CrossCamera,
        ExperimentKind::CrossBoth,
    ] {
        ensure(plan.count(k) == 4, format!("{} {k} items", plan.count(k)))?;
    }
    ensure(plan.items.len() == 16, format!("{} items in total", plan.items.len()))?;
    ensure(plan.items.windows(2).all(|w| w[0] < w[1]), "plan items are not in order")?;

    // leakage: copy one validation comparison into a test cell
    let cells = generate_panel(&spec).map_err(|e| e.to_string())?;
    let mut source = MemorySource::new();
    let mut leaked = None;
    for cell in &cells {
        let mut aligned = align_tables(&cell.tables).map_err(|e| e.to_string())?;
        if cell.partition == Partition::Test && leaked.is_none() {
            let val = cells
                .iter()
                .find(|c| c.partition == Partition::Validation && c.setting == cell.setting)
                .unwrap();
            let donor = align_tables(&val.tables).unwrap();
            let mut pairs = aligned.pairs().to_vec();
            pairs[0] = donor.pairs()[0].clone();
            leaked = Some(pairs[0].clone());
            let scores: Vec<f64> = aligned.rows().flatten().copied().collect();
            aligned = AlignedScores::new(aligned.matcher_ids().to_vec(), pairs, scores).unwrap();
        }
        source.insert(cell.setting.clone(), cell.partition, aligned);
    }
    let options = GridOptions {
        seed: 5,
        kinds: BTreeSet::from([ExperimentKind::Intra]),
        validation_scope: ValidationScope::TrainSetting,
        jobs: 1,
        keep_going: false,
    };
    let err = run_grid(&spec.settings, &[MethodSpec::single("baseline")], &source, &options)
        .err()
        .ok_or("grid with injected overlap did not fail")?;
    let leaked = leaked.unwrap();
    match err.root() {
        Error::Leakage {
            probe_id,
            reference_id,
        } if *probe_id == leaked.probe_id && *reference_id == leaked.reference_id => {}
        other => return Err(format!("expected leakage error, got {other}")),
    }

    // rerun with the same seed through the command line
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let demo = tmp.path().join("demo");
    run_ok(bin().args(["synth", "demo", "--seed", "5", "--out-dir"]).arg(&demo))?;
    let config = demo.join("experiment.json");
    let (a, b) = (tmp.path().join("run_a"), tmp.path().join("run_b"));
    run_ok(bin().args(["grid", "--jobs", "1", "--config"]).arg(&config).arg("--out-dir").arg(&a))?;
    run_ok(bin().args(["grid", "--jobs", "3", "--config"]).arg(&config).arg("--out-dir").arg(&b))?;
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    ensure(!ta.is_empty() && ta == tb, "reruns differ")?;
    Ok(format!(
        "4/4/4/4 items, leakage on ({}, {}), {} files byte-identical",
        leaked.probe_id,
        leaked.reference_id,
        ta.len()
    ))
}

fn end_to_end() -> Outcome {
    timed(Duration::from_secs(10), || {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let demo = tmp.path().join("demo");
        run_ok(bin().args(["synth", "demo", "--seed", "11", "--out-dir"]).arg(&demo))?;

        let slug = "synthetic_cam1_4.2m";
        let mut fuse = bin();
        fuse.args(["fuse", "--method", "perceptron"]);
        for m in ["recon_a", "recon_b", "recon_c", "recon_d"] {
            let dir = demo.join("scores").join(m);
            fuse.arg("--scores").arg(dir.join(format!("{slug}_test.csv")));
            fuse.arg("--validation").arg(dir.join(format!("{slug}_validation.csv")));
        }
        let fused = tmp.path().join("fused.csv");
        run_ok(fuse.arg("--out").arg(&fused))?;
        let table = run_ok(
            bin()
                .args(["eval", "--scores"])
                .arg(&fused)
                .arg("--out-dir")
                .arg(tmp.path().join("eval")),
        )?;
        ensure(table.lines().count() == 2, format!("eval printed {table:?}"))?;

        run_ok(bin().args(["grid", "--config"]).arg(demo.join("experiment.json")))?;
        let summary = fs::read_to_string(demo.join("results").join("summary.csv"))
            .map_err(|e| e.to_string())?;
        let rows: Vec<&str> = summary.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        ensure(rows.len() == 9, format!("{} summary rows", rows.len()))?;
        for row in &rows {
            let cells: Vec<&str> = row.split(',').collect();
            // method, recipe, n_results, then mean and sd of five metrics
            ensure(cells.len() == 13, format!("row {row} has {} cells", cells.len()))?;
            ensure(
                cells[3..].iter().step_by(2).all(|c| !c.is_empty()),
                format!("row {row} lacks a metric"),
            )?;
        }
        let methods: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
        ensure(methods[0] == "baseline", "baseline row is not first")?;
        Ok(format!("{} summary rows: {}", rows.len(), methods.join(" ")))
    })
}

#[test]
fn acceptance_criteria() {
    let checks: [Check; 10] = [
        ("1 gaussian oracle suite", gaussian_oracles),
        ("2 brute-force equivalence", brute_force_equivalence),
        ("3 rank invariance", rank_invariance),
        ("4 fusion gain law", fusion_gain),
        ("5 fusion rule identities", fusion_identities),
        ("6 chance-level consistency", chance_level),
        ("7 pcc weight properties", pcc_weights),
        ("8 perceptron fuser", perceptron),
        ("9 protocol grid", protocol_grid),
        ("10 end-to-end demo", end_to_end),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                println!("FAIL criterion {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
