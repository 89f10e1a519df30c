//! One function per subcommand, each a thin chain over the library.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use memeguard::metrics::{fleiss_kappa, HashEmbedder};
use memeguard::policy::Checkpoint;
use memeguard::schema::{load_dataset, save_dataset, stratified_split, BinaryLabel, MemeRecord};
use memeguard::synth::{
    analytic_consistency, derive_seed, generate_dataset, oracle_annotate, verify_dataset,
    MockAnnotator, TaskRules,
};
use memeguard::trainer::{
    alpha_beta_grid, evaluate, gamma_grid, run_pipeline, sweep_reward_weights, write_sweep_csv,
    EvalReport, RunConfig,
};
use serde_json::Value;

use crate::{report, AnnotateMode, Command, SweepAxis};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            n,
            seed,
            rules,
            out,
        } => gen_data(n, seed, rules.as_deref(), &out),
        Command::Split {
            input,
            ratio,
            seed,
            train_out,
            test_out,
        } => split(&input, ratio, seed, train_out, test_out),
        Command::Annotate {
            input,
            mode,
            annotators,
            error_rate,
            seed,
            rules,
            out,
        } => annotate(
            &input,
            mode,
            annotators,
            error_rate,
            seed,
            rules.as_deref(),
            &out,
        ),
        Command::Verify {
            input,
            annotators,
            error_rate,
            seed,
            rules,
            out,
        } => verify(
            &input,
            annotators,
            error_rate,
            seed,
            rules.as_deref(),
            out.as_deref(),
        ),
        Command::Train {
            config,
            train,
            test,
            stages,
            label_only,
            seed,
            from,
            out_dir,
            log_rollouts,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(stages) = stages {
                cfg.stage1.enabled = stages.contains(&1);
                cfg.stage2.enabled = stages.contains(&2);
                cfg.stage3.enabled = stages.contains(&3);
            }
            cfg.label_only |= label_only;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            train_cmd(
                &cfg,
                &train,
                test.as_deref(),
                from.as_deref(),
                &out_dir,
                log_rollouts,
            )
        }
        Command::Eval {
            ckpt,
            data,
            config,
            label_only,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.label_only |= label_only;
            eval_cmd(&cfg, &ckpt, &data, out.as_deref())
        }
        Command::Sweep {
            ckpt,
            train,
            test,
            axis,
            config,
            seed,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            sweep(&cfg, &ckpt, &train, &test, axis, &out)
        }
        Command::Kappa { ratings } => kappa(&ratings),
        Command::Report { run_dir, out_dir } => {
            let out_dir = out_dir.unwrap_or_else(|| run_dir.clone());
            let written = report::emit_report(&run_dir, &out_dir)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn load_rules(path: Option<&Path>) -> Result<TaskRules> {
    match path {
        Some(p) => TaskRules::load(p).with_context(|| format!("loading rules {}", p.display())),
        None => Ok(TaskRules::default()),
    }
}

fn load(path: &Path) -> Result<Vec<MemeRecord>> {
    load_dataset(path).with_context(|| format!("reading {}", path.display()))
}

fn save(records: &[MemeRecord], path: &Path) -> Result<()> {
    save_dataset(records, path).with_context(|| format!("writing {}", path.display()))
}

/// Rounds every non-integer number to 4 decimals.
fn round_json(value: &mut Value) {
    match value {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            if let Some(x) = n.as_f64() {
                let r = (x * 1e4).round() / 1e4;
                if let Some(num) = serde_json::Number::from_f64(r) {
                    *n = num;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

fn write_report(value: &EvalReport, path: &Path) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn summary_line(rep: &EvalReport) -> String {
    let c = &rep.classification;
    format!(
        "n {} accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} macro_f1 {:.4}",
        rep.n, c.accuracy, c.precision, c.recall, c.f1, c.macro_f1
    )
}

fn label_ratio(records: &[MemeRecord]) -> (usize, usize) {
    let harmful = records
        .iter()
        .filter(|r| r.label == BinaryLabel::Harmful)
        .count();
    (harmful, records.len() - harmful)
}

fn gen_data(n: usize, seed: u64, rules: Option<&Path>, out: &Path) -> Result<()> {
    let rules = load_rules(rules)?;
    let records = generate_dataset(&rules, n, seed)?;
    save(&records, out)?;
    let (h, nh) = label_ratio(&records);
    println!("records {n} harmful {h} nonharmful {nh}");
    Ok(())
}

fn sibling(input: &Path, suffix: &str) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    input.with_file_name(format!("{stem}.{suffix}.jsonl"))
}

fn split(
    input: &Path,
    ratio: f64,
    seed: u64,
    train_out: Option<PathBuf>,
    test_out: Option<PathBuf>,
) -> Result<()> {
    let records = load(input)?;
    let (train, test) = stratified_split(&records, ratio, seed)?;
    let train_out = train_out.unwrap_or_else(|| sibling(input, "train"));
    let test_out = test_out.unwrap_or_else(|| sibling(input, "test"));
    if train_out == input || test_out == input {
        bail!("split outputs must differ from the input file");
    }
    save(&train, &train_out)?;
    save(&test, &test_out)?;
    for (name, part) in [("train", &train), ("test", &test)] {
        let (h, nh) = label_ratio(part);
        println!("{name} {} harmful {h} nonharmful {nh}", part.len());
    }
    Ok(())
}

fn annotators(n: usize, error_rate: f64, seed: u64) -> Result<Vec<MockAnnotator>> {
    (0..n)
        .map(|i| {
            MockAnnotator::new(
                format!("a{}", i + 1),
                error_rate,
                derive_seed(seed, i as u64),
            )
            .map_err(Into::into)
        })
        .collect()
}

fn annotate(
    input: &Path,
    mode: AnnotateMode,
    n_annotators: usize,
    error_rate: f64,
    seed: u64,
    rules: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let rules = load_rules(rules)?;
    let mut records = load(input)?;
    match mode {
        AnnotateMode::Oracle => {
            for r in &mut records {
                r.cot = Some(oracle_annotate(r, &rules));
            }
            save(&records, out)?;
            println!("annotated {}", records.len());
        }
        AnnotateMode::Mock => {
            if n_annotators == 0 {
                bail!("--annotators must be at least 1");
            }
            let panel = annotators(n_annotators, error_rate, seed)?;
            let mut w = csv::Writer::from_path(out)
                .with_context(|| format!("writing {}", out.display()))?;
            let mut header = vec!["item".to_string()];
            header.extend(panel.iter().map(|a| a.id.clone()));
            w.write_record(&header)?;
            for r in &records {
                let mut row = vec![r.id.clone()];
                row.extend(
                    panel
                        .iter()
                        .map(|a| a.annotate(r, &rules).judgement.as_str().to_string()),
                );
                w.write_record(&row)?;
            }
            w.flush()?;
            println!("items {} raters {}", records.len(), panel.len());
        }
    }
    Ok(())
}

fn verify(
    input: &Path,
    n_annotators: usize,
    error_rate: f64,
    seed: u64,
    rules: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let rules = load_rules(rules)?;
    let mut records = load(input)?;
    let panel = annotators(n_annotators, error_rate, seed)?;
    let (outcomes, summary) = verify_dataset(&records, &panel, &rules)?;
    let analytic = analytic_consistency(&vec![error_rate; n_annotators]);
    println!("records {}", summary.records);
    println!("consistent {}", summary.consistent);
    println!("corrected {}", summary.corrected);
    println!("disputed {}", summary.disputed);
    println!("consistency_rate {:.4}", summary.consistency_rate);
    println!("analytic_consistency {analytic:.4}");
    if let Some(out) = out {
        for (r, v) in records.iter_mut().zip(&outcomes) {
            r.cot = Some(v.annotation().clone());
        }
        save(&records, out)?;
    }
    Ok(())
}

fn train_cmd(
    cfg: &RunConfig,
    train: &Path,
    test: Option<&Path>,
    from: Option<&Path>,
    out_dir: &Path,
    log_rollouts: bool,
) -> Result<()> {
    let train = load(train)?;
    let test = test.map(load).transpose()?;
    let start = from
        .map(|p| Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display())))
        .transpose()?;
    let run = run_pipeline(
        cfg,
        &train,
        test.as_deref().unwrap_or_default(),
        start,
        Some(out_dir),
        log_rollouts,
    )?;
    if let Some(s3) = &run.stage3 {
        for w in &s3.warnings {
            eprintln!("warning: {w}");
        }
    }
    println!("final stage {}", run.stage);
    for ck in &run.checkpoints {
        println!("checkpoint {}", ck.display());
    }
    if let Some(test) = test {
        let rep = evaluate(&run.policy, &test, cfg, &HashEmbedder::default())?;
        write_report(&rep, &out_dir.join("eval.json"))?;
        println!("{}", summary_line(&rep));
    }
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, ckpt: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    let policy = Checkpoint::load(ckpt)
        .with_context(|| format!("loading checkpoint {}", ckpt.display()))?
        .into_policy()?;
    let records = load(data)?;
    let rep = evaluate(&policy, &records, cfg, &HashEmbedder::default())?;
    if let Some(out) = out {
        write_report(&rep, out)?;
    }
    println!("{}", summary_line(&rep));
    Ok(())
}

fn sweep(
    cfg: &RunConfig,
    ckpt: &Path,
    train: &Path,
    test: &Path,
    axis: SweepAxis,
    out: &Path,
) -> Result<()> {
    let start =
        Checkpoint::load(ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let train = load(train)?;
    let test = load(test)?;
    let grid = match axis {
        SweepAxis::Gamma => gamma_grid(),
        SweepAxis::AlphaBeta => alpha_beta_grid(),
    };
    let rows = sweep_reward_weights(cfg, &start, &train, &test, &grid)?;
    let file = File::create(out).with_context(|| format!("writing {}", out.display()))?;
    write_sweep_csv(&rows, BufWriter::new(file))?;
    let mut stdout = std::io::stdout().lock();
    write_sweep_csv(&rows, &mut stdout)?;
    stdout.flush()?;
    Ok(())
}

fn kappa(path: &Path) -> Result<()> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut ratings = Vec::new();
    for row in reader.records() {
        let row = row?;
        ratings.push(row.iter().skip(1).map(str::to_string).collect::<Vec<_>>());
    }
    let rep = fleiss_kappa(&ratings)?;
    println!("{:.4}", rep.kappa);
    Ok(())
}
