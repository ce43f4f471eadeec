use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use simmst::data::{
    chronological_split, generate_synthetic, load_dataset, make_windows, ForecastBatch, MultiModeDataset, Scaler,
    SplitRanges, SyntheticConfig,
};
use simmst::model::{load_checkpoint, scaling_report, SimMst, SimMstConfig};
use simmst::training::{
    self, predict_windows, run_ablation, EpochRecord, Variant, CHECKPOINT_FILE, DEFAULT_HORIZON_STEPS,
};

use crate::config::{RunConfig, UsageError, RESOLVED_CONFIG_FILE};
use crate::{AblateArgs, EvalArgs, GenerateArgs, GradcheckArgs, Overrides, ParamsArgs};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn generate(args: GenerateArgs) -> anyhow::Result<ExitCode> {
    let mut cfg: SyntheticConfig = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => SyntheticConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.modes {
        cfg.num_modes = v;
        cfg.couplings.retain(|c| c.source < v && c.target < v);
    }
    if let Some(v) = args.nodes {
        cfg.num_nodes = v;
    }
    if let Some(v) = args.steps {
        cfg.num_steps = v;
    }
    if let Some(v) = args.channels {
        cfg.num_channels = v;
    }
    for c in &mut cfg.couplings {
        if let Some(g) = args.gain {
            c.gain = g;
        }
        if let Some(l) = args.lag {
            c.lag = l;
        }
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let ds = generate_synthetic(&cfg)?;
    let out = args.out.unwrap_or_else(|| crate::config::output_root().join("data"));
    ds.save(&out)?;
    if args.csv {
        write_csv_modes(&ds, &out)?;
    }
    write(&out.join("generator.toml"), toml::to_string_pretty(&cfg)?)?;
    println!(
        "wrote {} modes x {} nodes x {} steps x {} channels to {}",
        ds.num_modes(),
        ds.num_nodes(),
        ds.num_steps(),
        ds.num_channels(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn write_csv_modes(ds: &MultiModeDataset, dir: &Path) -> anyhow::Result<()> {
    for (m, name) in ds.mode_names.iter().enumerate() {
        let mut text = String::from("node,time_index,channel,value\n");
        for n in 0..ds.num_nodes() {
            for t in 0..ds.num_steps() {
                for c in 0..ds.num_channels() {
                    writeln!(text, "{n},{t},{c},{}", ds.value(m, n, t, c))?;
                }
            }
        }
        write(&dir.join(format!("{name}.csv")), text)?;
    }
    Ok(())
}

/// Defaults, then the file, then flags.
fn resolve(o: &Overrides) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(o.config.as_deref())?;
    if let Some(v) = &o.data {
        cfg.data.path = Some(v.clone());
    }
    if let Some(v) = &o.out {
        cfg.output_dir = Some(v.clone());
    }
    if let Some(v) = o.seed {
        cfg.seed = Some(v);
    }
    let m = &mut cfg.model;
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(o.history => m.history_len);
    set!(o.horizon => m.horizon);
    set!(o.hidden_dim => m.hidden_dim);
    set!(o.embed_dim => m.embed_dim);
    set!(o.layers => m.num_layers);
    set!(o.topk => m.topk);
    set!(o.tdl_kind => m.tdl_kind);
    if o.no_tdl {
        m.enable_tdl = false;
    }
    if o.no_csrl {
        m.enable_csrl = false;
    }
    if o.no_ccl {
        m.enable_ccl = false;
    }
    if o.layers.is_some() || o.history.is_some() {
        // Explicit lengths from the file no longer fit the new depth.
        m.temporal_lengths = None;
    }
    let t = &mut cfg.train;
    set!(o.lr => t.learning_rate);
    set!(o.batch_size => t.batch_size);
    set!(o.epochs => t.max_epochs);
    set!(o.patience => t.patience);
    if o.clip_norm.is_some() {
        t.clip_norm = o.clip_norm;
    }
    cfg.finalize()
}

/// Fits the model shape to the dataset and computes the splits.
fn prepare(cfg: &mut RunConfig) -> anyhow::Result<(MultiModeDataset, SplitRanges)> {
    let path = cfg.data_path()?.to_path_buf();
    let ds = load_dataset(&path).with_context(|| format!("loading dataset {}", path.display()))?;
    let m = &mut cfg.model;
    m.num_modes = ds.num_modes();
    m.num_nodes = ds.num_nodes();
    m.channels = ds.num_channels();
    if m.topk > m.num_nodes {
        eprintln!(
            "note: topk {} exceeds {} nodes; using {}",
            m.topk, m.num_nodes, m.num_nodes
        );
        m.topk = m.num_nodes;
    }
    m.validate().map_err(|e| usage(e.to_string()))?;
    let ranges = chronological_split(ds.num_steps(), cfg.data.fractions, m.history_len + m.horizon)
        .map_err(|e| usage(e.to_string()))?;
    Ok((ds, ranges))
}

fn progress(quiet: bool) -> impl FnMut(&EpochRecord) {
    move |r: &EpochRecord| {
        if !quiet {
            eprintln!(
                "epoch {:>4}  train {:.6}  val {:.6}  ({} ms)",
                r.epoch, r.train_loss, r.val_loss, r.wall_ms
            );
        }
    }
}

pub fn train(o: Overrides) -> anyhow::Result<ExitCode> {
    let mut cfg = resolve(&o)?;
    let (ds, ranges) = prepare(&mut cfg)?;
    let out = cfg.output_dir("train");
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join(RESOLVED_CONFIG_FILE), cfg.to_toml())?;
    let model = SimMst::new(cfg.model.clone())?;
    eprintln!(
        "training {} parameters on {} train / {} val steps",
        model.count_parameters(),
        ranges.train.len(),
        ranges.val.len()
    );
    let outcome = training::train(model, &ds, &ranges, &cfg.train, Some(&out), &mut progress(o.quiet))?;
    println!(
        "best validation loss {} at epoch {} of {}{}",
        outcome.best_val_loss,
        outcome.best_epoch,
        outcome.history.len(),
        if outcome.stopped_early { " (early stop)" } else { "" }
    );
    println!("checkpoint: {}", out.join(CHECKPOINT_FILE).display());
    Ok(ExitCode::SUCCESS)
}

fn load_run(args: &EvalArgs) -> anyhow::Result<(RunConfig, SimMst, MultiModeDataset, SplitRanges)> {
    let cfg_path = args.run.join(RESOLVED_CONFIG_FILE);
    let mut cfg = RunConfig::load(Some(&cfg_path))?;
    if let Some(d) = &args.data {
        cfg.data.path = Some(d.clone());
    }
    let ckpt = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| args.run.join(CHECKPOINT_FILE));
    let model = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    cfg.model = model.config().clone();
    let (ds, ranges) = prepare(&mut cfg)?;
    if &cfg.model != model.config() {
        return Err(usage(
            "the dataset does not match the checkpoint's mode, node or channel counts",
        ));
    }
    Ok((cfg, model, ds, ranges))
}

fn report_steps(horizon: usize) -> Vec<usize> {
    let steps: Vec<usize> = DEFAULT_HORIZON_STEPS
        .iter()
        .copied()
        .filter(|&s| s <= horizon)
        .collect();
    if steps.is_empty() {
        (1..=horizon).collect()
    } else {
        steps
    }
}

pub fn evaluate(args: EvalArgs) -> anyhow::Result<ExitCode> {
    let (cfg, model, ds, ranges) = load_run(&args)?;
    let steps = report_steps(model.config().horizon);
    let report = training::evaluate(&model, &ds, &ranges, args.split, &steps, cfg.train.batch_size)?;
    let name = format!("{:?}", args.split).to_lowercase();
    let out = args.out.unwrap_or_else(|| args.run.join(format!("metrics_{name}.csv")));
    report
        .table
        .write_csv(&out)
        .with_context(|| format!("writing {}", out.display()))?;
    println!("{name} loss {} over {} windows", report.loss, report.num_windows);
    print!("{}", report.table.to_csv());
    println!("metrics: {}", out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn predict(args: EvalArgs) -> anyhow::Result<ExitCode> {
    let (cfg, model, ds, ranges) = load_run(&args)?;
    let mc = model.config();
    let scaler = Scaler::fit(&ds, ranges.train.clone());
    let scaled = scaler.apply(&ds);
    let windows = make_windows(&scaled, ranges.get(args.split), mc.history_len, mc.horizon, 1);
    if windows.is_empty() {
        return Err(usage("the split holds no complete window"));
    }
    let (mut pred, _) = predict_windows(&model, &scaled, &windows, cfg.train.batch_size)?;
    scaler.invert(&mut pred, 1);
    let truth = ForecastBatch::collate(&ds, &windows, mc.history_len, mc.horizon).target;
    let mut text = String::from("window_start,target_time,mode,node,horizon,channel,prediction,truth\n");
    for (b, w) in windows.iter().enumerate() {
        for (m, mode) in ds.mode_names.iter().enumerate() {
            for n in 0..mc.num_nodes {
                for h in 0..mc.horizon {
                    let ts = ds.timestamp(w.start + mc.history_len + h);
                    for c in 0..mc.channels {
                        let idx = [b, m, n, h, c];
                        writeln!(
                            text,
                            "{},{},{mode},{n},{},{c},{},{}",
                            w.start,
                            ts.format("%Y-%m-%dT%H:%M"),
                            h + 1,
                            pred.get(&idx),
                            truth.get(&idx)
                        )?;
                    }
                }
            }
        }
    }
    let name = format!("{:?}", args.split).to_lowercase();
    let out = args
        .out
        .unwrap_or_else(|| args.run.join(format!("predictions_{name}.csv")));
    write(&out, text)?;
    println!("wrote {} windows to {}", windows.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(args: GradcheckArgs) -> anyhow::Result<ExitCode> {
    use simmst::model::TdlKind;
    let data = generate_synthetic(&SyntheticConfig {
        seed: args.seed,
        num_nodes: 3,
        num_steps: 60,
        ..SyntheticConfig::default()
    })?;
    let mut all_passed = true;
    for kind in [TdlKind::Mlp, TdlKind::Seasonal] {
        let cfg = SimMstConfig {
            tdl_kind: kind,
            init_seed: args.seed,
            ..SimMstConfig::tiny()
        };
        let scaled = Scaler::fit(&data, 0..data.num_steps()).apply(&data);
        let windows = make_windows(&scaled, 0..data.num_steps(), cfg.history_len, cfg.horizon, 7);
        let batch = ForecastBatch::collate(&scaled, &windows[..2], cfg.history_len, cfg.horizon);
        let model = SimMst::new(cfg)?;
        let report = model.gradient_check(&batch, args.step, args.tolerance)?;
        let worst = report
            .leaves
            .iter()
            .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
            .expect("parameters");
        println!(
            "{kind:?}: {} tensors, max relative error {:.3e} (worst {}), {}",
            report.leaves.len(),
            report.max_error(),
            worst.name,
            if report.passed() { "pass" } else { "FAIL" }
        );
        all_passed &= report.passed();
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub fn params(args: ParamsArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = resolve(&args.overrides)?;
    if cfg.data.path.is_some() {
        prepare(&mut cfg)?;
    }
    let model = SimMst::new(cfg.model.clone()).map_err(|e| usage(e.to_string()))?;
    println!("parameters: {}", model.count_parameters());
    let report = scaling_report(&cfg.model, &args.sweep_nodes, &args.sweep_windows)?;
    println!("num_nodes,history_len,total,temporal");
    for p in report.node_sweep.iter().chain(&report.window_sweep) {
        println!("{},{},{},{}", p.num_nodes, p.history_len, p.total, p.temporal);
    }
    println!("growth exponent vs N (total): {:.3}", report.node_exponent);
    println!("growth exponent vs W (temporal mixers): {:.3}", report.window_exponent);
    println!("growth exponent vs W (total): {:.3}", report.window_exponent_total);
    Ok(ExitCode::SUCCESS)
}

pub fn ablate(args: AblateArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = resolve(&args.overrides)?;
    let (ds, ranges) = prepare(&mut cfg)?;
    let out = cfg.output_dir("ablate");
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join(RESOLVED_CONFIG_FILE), cfg.to_toml())?;
    let quiet = args.overrides.quiet;
    let table = run_ablation(
        &ds,
        &ranges,
        &cfg.model,
        &cfg.train,
        &Variant::ALL,
        &args.seeds,
        &mut |v, seed, r| {
            if !quiet && (r.epoch == 1 || r.epoch % 10 == 0) {
                eprintln!("{} seed {seed} epoch {} val {:.6}", v.label(), r.epoch, r.val_loss);
            }
        },
    )?;
    write(&out.join("ablation.csv"), table.summary_csv())?;
    write(&out.join("ablation_runs.csv"), table.runs_csv())?;
    print!("{}", table.summary_csv());
    Ok(ExitCode::SUCCESS)
}
