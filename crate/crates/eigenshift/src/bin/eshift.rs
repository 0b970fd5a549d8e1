//! Command-line surface for the spectral detox pipeline: factor a head,
//! damp toxicity-aligned directions, scan for expert neurons and layers,
//! and score edits on toxicity versus fluency.
//!
//! Exit codes: 0 on success, 2 for usage and I/O problems, 3 for data
//! that parses but cannot be used. Every command is deterministic:
//! re-running with identical inputs and seed writes identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use eigenshift::error::Error;
use eigenshift::expert_id::{
    auroc_threshold_survey, layer_expert, neuron_experts_ap, neuron_experts_auroc,
    NeuronActivationTable, DEFAULT_SURVEY_THRESHOLDS,
};
use eigenshift::interventions::{evaluate_against_base, evaluate_model_pair};
use eigenshift::linalg::row_orthonormality_defect;
use eigenshift::metrics::tph;
use eigenshift::report::{
    eval_csv, neuron_csv, write_json, DecomposeReport, EvaluateReport, ExpertScanReport,
    InputHash, ResolvedConfig, ShiftReport,
};
use eigenshift::tensor_store::{
    load_activation_dataset, load_weight_matrix, write_activation_dataset, write_atomic,
    write_tensor_file, TensorFile, TensorPayload, WeightMatrix,
};
use eigenshift::toylm::{build_toy_model, write_corpus, GenParams, ToyModel, ToyParams};
use eigenshift::{eigenshift as run_eigenshift, frobenius_loss, svd, Plan, Result, TargetRule, Variant};

#[derive(Parser)]
#[command(
    name = "eshift",
    version,
    about = "Spectral surgery on a language-model output head"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factor the head tensor and report its spectrum and factor quality.
    Decompose(DecomposeArgs),
    /// Damp selected spectral directions and write an edited checkpoint.
    Shift(ShiftArgs),
    /// Score every neuron, run the threshold survey, and rate the layer.
    ScanExperts(ScanArgs),
    /// Compare a base checkpoint against an edited one (or stored
    /// baseline numbers) on toxicity and perplexity.
    Evaluate(EvaluateArgs),
    /// Print the toxicity/perplexity harmonic score for given fractional
    /// deltas.
    Tph(TphArgs),
    /// Construct the planted toy checkpoint used by demos and tests.
    MakeToy(MakeToyArgs),
    /// Generate a labeled activation dump from a toy checkpoint.
    MakeDump(MakeDumpArgs),
}

/// JSON run configuration; any command flag overrides its config value.
#[derive(Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    checkpoint: Option<PathBuf>,
    tensor: Option<String>,
    dump: Option<PathBuf>,
    alpha: Option<f64>,
    top_k: Option<usize>,
    percentile: Option<f64>,
    targets: Option<Vec<usize>>,
    variant: Option<String>,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
    seed: Option<u64>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::InvalidArgument(format!("config {}: {e}", path.display()))
    })
}

fn require(field: &str, value: Option<PathBuf>) -> Result<PathBuf> {
    value.ok_or_else(|| Error::InvalidArgument(format!("--{field} is required")))
}

fn parse_variant(name: &str) -> Result<Variant> {
    match name {
        "unit-v" => Ok(Variant::UnitV),
        "sigma-scaled" => Ok(Variant::SigmaScaled),
        other => Err(Error::InvalidArgument(format!(
            "unknown variant \"{other}\"; expected unit-v or sigma-scaled"
        ))),
    }
}

/// Seed precedence: flag, then config file, then ESHIFT_SEED, then 0.
fn resolve_seed(flag: Option<u64>, cfg: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag.or(cfg) {
        return Ok(seed);
    }
    match std::env::var("ESHIFT_SEED") {
        Ok(text) => text.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!(
                "ESHIFT_SEED must be an unsigned integer, got \"{text}\""
            ))
        }),
        Err(_) => Ok(0),
    }
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Decompose(args) => cmd_decompose(args),
        Command::Shift(args) => cmd_shift(args),
        Command::ScanExperts(args) => cmd_scan_experts(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Tph(args) => cmd_tph(args),
        Command::MakeToy(args) => cmd_make_toy(args),
        Command::MakeDump(args) => cmd_make_dump(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Tensor entry holding the output head (default "lm_head").
    #[arg(long)]
    tensor: Option<String>,
    /// Optional factor file receiving entries "u", "sigma", "vt".
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_decompose(args: DecomposeArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let checkpoint = require("checkpoint", args.checkpoint.or(cfg.checkpoint))?;
    let tensor = args.tensor.or(cfg.tensor).unwrap_or_else(|| "lm_head".into());
    let out = args.out.or(cfg.out);
    let report_path = args.report.or(cfg.report);

    let tf = TensorFile::open(&checkpoint)?;
    let weight = load_weight_matrix(&tf, &tensor)?;
    let factors = svd(&weight.matrix)?;
    let loss = frobenius_loss(&weight.matrix, &factors.reconstruct())?;
    let u_defect = row_orthonormality_defect(&factors.u().transpose());
    let v_defect = row_orthonormality_defect(factors.vt());

    if let Some(out) = &out {
        let u = factors.u();
        let vt = factors.vt();
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "u".to_string(),
            TensorPayload::f64(vec![u.rows(), u.cols()], u.data()),
        );
        tensors.insert(
            "sigma".to_string(),
            TensorPayload::f64(vec![factors.sigma().len()], factors.sigma()),
        );
        tensors.insert(
            "vt".to_string(),
            TensorPayload::f64(vec![vt.rows(), vt.cols()], vt.data()),
        );
        let mut meta = BTreeMap::new();
        meta.insert("source_tensor".to_string(), tensor.clone());
        write_tensor_file(out, &tensors, &meta)?;
    }

    let sigma = factors.sigma();
    println!(
        "{tensor}: {}x{}, sigma in [{:.6}, {:.6}], reconstruction loss {:.3e}",
        weight.matrix.rows(),
        weight.matrix.cols(),
        sigma.last().copied().unwrap_or(0.0),
        sigma.first().copied().unwrap_or(0.0),
        loss
    );

    if let Some(path) = &report_path {
        let mut config = ResolvedConfig::default();
        config.set("checkpoint", checkpoint.display());
        config.set("tensor", &tensor);
        if let Some(out) = &out {
            config.set("out", out.display());
        }
        let report = DecomposeReport {
            config,
            checkpoint: InputHash::of(&checkpoint)?,
            tensor,
            rows: weight.matrix.rows(),
            cols: weight.matrix.cols(),
            sigma: sigma.to_vec(),
            reconstruction_loss: loss,
            u_orthonormality_defect: u_defect,
            v_orthonormality_defect: v_defect,
        };
        write_json(path, &report)?;
    }
    Ok(())
}

#[derive(Args)]
struct ShiftArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    tensor: Option<String>,
    /// Labeled activation dump used to score the directions.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Damping factor applied to the selected singular values.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Damp the k directions with the largest toxicity gap.
    #[arg(long, group = "selector")]
    top_k: Option<usize>,
    /// Damp directions above this spectrum percentile (0 < p < 100).
    #[arg(long, group = "selector")]
    percentile: Option<f64>,
    /// Damp exactly these direction indices (comma separated).
    #[arg(long, group = "selector", value_delimiter = ',')]
    targets: Option<Vec<usize>>,
    /// Direction activation: unit-v (default) or sigma-scaled.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn resolve_rule(args: &ShiftArgs, cfg: &FileConfig) -> Result<TargetRule> {
    // Flag selectors are already mutually exclusive via the clap group;
    // any flag selector overrides all config selectors.
    if let Some(k) = args.top_k {
        return Ok(TargetRule::TopK(k));
    }
    if let Some(p) = args.percentile {
        return Ok(TargetRule::Percentile(p));
    }
    if let Some(t) = &args.targets {
        return Ok(TargetRule::Explicit(t.clone()));
    }
    let from_config: Vec<TargetRule> = [
        cfg.top_k.map(TargetRule::TopK),
        cfg.percentile.map(TargetRule::Percentile),
        cfg.targets.clone().map(TargetRule::Explicit),
    ]
    .into_iter()
    .flatten()
    .collect();
    match from_config.len() {
        0 => Err(Error::InvalidArgument(
            "one of --top-k, --percentile, or --targets is required".into(),
        )),
        1 => Ok(from_config.into_iter().next().expect("len checked")),
        _ => Err(Error::InvalidArgument(
            "config file sets more than one target selector".into(),
        )),
    }
}

fn cmd_shift(args: ShiftArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let rule = resolve_rule(&args, &cfg)?;
    let checkpoint = require("checkpoint", args.checkpoint.clone().or(cfg.checkpoint))?;
    let dump_path = require("dump", args.dump.clone().or(cfg.dump))?;
    let out = require("out", args.out.clone().or(cfg.out))?;
    let tensor = args
        .tensor
        .clone()
        .or(cfg.tensor)
        .unwrap_or_else(|| "lm_head".into());
    let alpha = args
        .alpha
        .or(cfg.alpha)
        .ok_or_else(|| Error::InvalidArgument("--alpha is required".into()))?;
    let variant = parse_variant(
        args.variant
            .clone()
            .or(cfg.variant)
            .as_deref()
            .unwrap_or("unit-v"),
    )?;
    let report_path = args.report.clone().or(cfg.report);

    let plan = Plan::new(alpha, rule.clone(), variant)?;
    let tf = TensorFile::open(&checkpoint)?;
    let weight = load_weight_matrix(&tf, &tensor)?;
    let dump_tf = TensorFile::open(&dump_path)?;
    let dataset = load_activation_dataset(&dump_tf)?;
    let shift = run_eigenshift(&weight.matrix, &dataset, &plan)?;
    for warning in &shift.warnings {
        eprintln!("warning: {warning}");
    }

    if shift.identity {
        // The spectrum is bitwise unchanged; the edited checkpoint is the
        // input, byte for byte.
        let bytes = std::fs::read(&checkpoint).map_err(|e| Error::io(&checkpoint, e))?;
        write_atomic(&out, &bytes)?;
        println!("identity plan: wrote a byte copy of the input to {}", out.display());
    } else {
        let mut tensors = BTreeMap::new();
        for name in tf.names() {
            if name == tensor {
                continue;
            }
            let entry = tf.entry(name)?;
            tensors.insert(
                name.to_string(),
                TensorPayload::raw(entry.dtype, entry.shape.clone(), tf.read_raw(name)?)?,
            );
        }
        let edited = WeightMatrix {
            matrix: shift.w_prime.clone(),
            dtype: weight.dtype,
        };
        tensors.insert(tensor.clone(), edited.to_payload());
        write_tensor_file(&out, &tensors, tf.metadata())?;
        println!(
            "damped {} direction(s) with alpha {}: Frobenius delta {:.6}; wrote {}",
            shift.targets.len(),
            alpha,
            shift.frobenius_delta,
            out.display()
        );
    }

    if let Some(path) = &report_path {
        let mut config = ResolvedConfig::default();
        config.set("checkpoint", checkpoint.display());
        config.set("dump", dump_path.display());
        config.set("tensor", &tensor);
        config.set("alpha", alpha);
        config.set("variant", variant.name());
        config.set("out", out.display());
        match &rule {
            TargetRule::TopK(k) => config.set("top_k", k),
            TargetRule::Percentile(p) => config.set("percentile", p),
            TargetRule::Explicit(t) => config.set(
                "targets",
                t.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
            ),
        }
        let report = ShiftReport {
            config,
            checkpoint: InputHash::of(&checkpoint)?,
            dump: InputHash::of(&dump_path)?,
            tensor,
            variant: variant.name().to_string(),
            diagnostics: shift.diagnostics(alpha),
            sigma_before: shift.sigma_before.clone(),
            sigma_after: shift.sigma_after.clone(),
            identity: shift.identity,
            warnings: shift.warnings.clone(),
            output: out.display().to_string(),
        };
        write_json(path, &report)?;
    }
    Ok(())
}

#[derive(Args)]
struct ScanArgs {
    /// Labeled activation dump (sentence-pooled rows).
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Expert threshold for both AP and AUROC scores.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-neuron score table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_scan_experts(args: ScanArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let dump_path = require("dump", args.dump.or(cfg.dump))?;
    let report_path = args.report.or(cfg.report);
    let seed = resolve_seed(args.seed, cfg.seed)?;

    let tf = TensorFile::open(&dump_path)?;
    let dataset = load_activation_dataset(&tf)?;
    let table = NeuronActivationTable::new(dataset.hidden.clone(), dataset.labels.clone())?;
    let ap = neuron_experts_ap(&table, args.threshold)?;
    let auroc = neuron_experts_auroc(&table, args.threshold)?;
    let survey = auroc_threshold_survey(&auroc, &DEFAULT_SURVEY_THRESHOLDS)?;
    let layer = layer_expert(&dataset.hidden, &dataset.labels, seed)?;

    println!(
        "{} samples x {} neurons: {} AP expert(s), {} AUROC expert(s) at threshold {}",
        table.samples(),
        table.neurons(),
        ap.expert_count(),
        auroc.expert_count(),
        args.threshold
    );
    println!(
        "layer expertise {:.4} (silhouette {:.4}{})",
        layer.expertise,
        layer.silhouette,
        if layer.degenerate { ", degenerate" } else { "" }
    );

    if let Some(path) = &args.csv {
        write_atomic(path, neuron_csv(&ap, &auroc).as_bytes())?;
    }
    if let Some(path) = &report_path {
        let mut config = ResolvedConfig::default();
        config.set("dump", dump_path.display());
        config.set("threshold", args.threshold);
        config.set("seed", seed);
        let report = ExpertScanReport {
            config,
            dump: InputHash::of(&dump_path)?,
            samples: table.samples(),
            neurons: table.neurons(),
            pooling: table.pooling().to_string(),
            threshold: args.threshold,
            ap,
            auroc,
            survey_thresholds: DEFAULT_SURVEY_THRESHOLDS.to_vec(),
            survey_expert_percent: survey,
            layer,
        };
        write_json(path, &report)?;
    }
    Ok(())
}

#[derive(Args)]
struct EvaluateArgs {
    /// Base toy checkpoint (also the treated model with --base-report).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Edited checkpoint to compare against the base.
    #[arg(long, group = "baseline")]
    shifted: Option<PathBuf>,
    /// Previous evaluate report supplying the baseline numbers.
    #[arg(long, group = "baseline")]
    base_report: Option<PathBuf>,
    /// Number of trigger prompts to score toxicity on.
    #[arg(long, default_value_t = 64)]
    prompts: usize,
    /// Number of neutral sequences to score perplexity on.
    #[arg(long, default_value_t = 32)]
    corpus: usize,
    /// Token length of each neutral sequence.
    #[arg(long, default_value_t = 6)]
    corpus_len: usize,
    /// Continuation length per prompt.
    #[arg(long, default_value_t = 8)]
    gen_tokens: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Scored rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let checkpoint = require("checkpoint", args.checkpoint.or(cfg.checkpoint))?;
    let seed = resolve_seed(args.seed, cfg.seed)?;
    let report_path = args.report.or(cfg.report);
    if args.shifted.is_none() && args.base_report.is_none() {
        return Err(Error::InvalidArgument(
            "evaluate needs a baseline: pass --shifted or --base-report".into(),
        ));
    }

    let model = ToyModel::load(&checkpoint)?;
    let prompts = model.trigger_prompts(args.prompts);
    let corpus = model.neutral_corpus(args.corpus, args.corpus_len, seed);
    let gp = GenParams {
        n_tokens: args.gen_tokens,
        temperature: args.temperature,
        seed,
    };

    let mut rows = Vec::new();
    let mut shifted_hash = None;
    if let Some(shifted_path) = &args.shifted {
        let treated = ToyModel::load(shifted_path)?;
        rows.push(evaluate_model_pair(
            &model, &model, "original", &prompts, &corpus, &gp,
        )?);
        rows.push(evaluate_model_pair(
            &model, &treated, "shifted", &prompts, &corpus, &gp,
        )?);
        shifted_hash = Some(InputHash::of(shifted_path)?);
    } else if let Some(base_report) = &args.base_report {
        let text =
            std::fs::read_to_string(base_report).map_err(|e| Error::io(base_report, e))?;
        let prior: EvaluateReport = serde_json::from_str(&text).map_err(|e| {
            Error::InvalidArgument(format!("base report {}: {e}", base_report.display()))
        })?;
        let base_row = prior.rows.first().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "base report {} has no rows",
                base_report.display()
            ))
        })?;
        rows.push(evaluate_against_base(
            &model,
            "checkpoint",
            base_row.base_toxicity,
            base_row.base_perplexity,
            &prompts,
            &corpus,
            &gp,
        )?);
    }

    for row in &rows {
        let tph_text = row
            .tph
            .map(|t| format!("{t:.4}"))
            .unwrap_or_else(|| "--".into());
        println!(
            "{}: toxicity {:.4} (drop {:.4}), perplexity {:.4} (change {:+.4}), tph {}",
            row.label, row.toxicity, row.toxicity_drop, row.perplexity,
            row.perplexity_increase, tph_text
        );
        for note in &row.notes {
            println!("  note: {note}");
        }
    }

    if let Some(path) = &args.csv {
        write_atomic(path, eval_csv(&rows).as_bytes())?;
    }
    if let Some(path) = &report_path {
        let mut config = ResolvedConfig::default();
        config.set("checkpoint", checkpoint.display());
        if let Some(s) = &args.shifted {
            config.set("shifted", s.display());
        }
        if let Some(b) = &args.base_report {
            config.set("base_report", b.display());
        }
        config.set("prompts", args.prompts);
        config.set("corpus", args.corpus);
        config.set("corpus_len", args.corpus_len);
        config.set("gen_tokens", args.gen_tokens);
        config.set("temperature", args.temperature);
        config.set("seed", seed);
        let report = EvaluateReport {
            config,
            checkpoint: InputHash::of(&checkpoint)?,
            shifted: shifted_hash,
            prompts: args.prompts,
            corpus_sequences: args.corpus,
            gen_tokens: args.gen_tokens,
            temperature: args.temperature,
            seed,
            rows,
        };
        write_json(path, &report)?;
    }
    Ok(())
}

#[derive(Args)]
struct TphArgs {
    /// Relative toxicity drop as a fraction (0.5772 for 57.72%).
    #[arg(allow_negative_numbers = true)]
    toxicity_drop: f64,
    /// Relative perplexity change as a fraction.
    #[arg(allow_negative_numbers = true)]
    perplexity_change: f64,
}

fn cmd_tph(args: TphArgs) -> Result<()> {
    println!("{:.4}", tph(args.toxicity_drop, args.perplexity_change));
    Ok(())
}

#[derive(Args)]
struct MakeToyArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 64)]
    vocab: usize,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 64)]
    mlp_width: usize,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_make_toy(args: MakeToyArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let out = require("out", args.out.or(cfg.out))?;
    let seed = resolve_seed(args.seed, cfg.seed)?;
    if args.vocab < 17 {
        return Err(Error::InvalidArgument(format!(
            "vocabulary {} leaves no room for 8 toxic + 8 trigger tokens",
            args.vocab
        )));
    }
    let params = ToyParams {
        vocab: args.vocab,
        hidden: args.hidden,
        mlp_width: args.mlp_width,
        toxic_tokens: (args.vocab - 8..args.vocab).collect(),
        trigger_tokens: (args.vocab - 16..args.vocab - 8).collect(),
    };
    let model = build_toy_model(seed, &params)?;
    model.save(&out)?;
    println!(
        "toy model (seed {seed}): vocab {}, hidden {}, planted index {}; wrote {}",
        model.vocab(),
        model.hidden(),
        model.planted_index,
        out.display()
    );
    Ok(())
}

#[derive(Args)]
struct MakeDumpArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trigger prompts whose continuations seed the toxic class.
    #[arg(long, default_value_t = 64)]
    trigger_prompts: usize,
    /// Neutral prompts whose continuations seed the non-toxic class.
    #[arg(long, default_value_t = 64)]
    neutral_prompts: usize,
    #[arg(long, default_value_t = 6)]
    gen_tokens: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Also write the generated corpus as JSON lines.
    #[arg(long)]
    corpus_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_make_dump(args: MakeDumpArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let checkpoint = require("checkpoint", args.checkpoint.or(cfg.checkpoint))?;
    let out = require("out", args.out.or(cfg.out))?;
    let seed = resolve_seed(args.seed, cfg.seed)?;

    let model = ToyModel::load(&checkpoint)?;
    let gp = GenParams {
        n_tokens: args.gen_tokens,
        temperature: args.temperature,
        seed,
    };
    let corpus = model.dump_corpus(args.trigger_prompts, args.neutral_prompts, &gp)?;
    if let Some(path) = &args.corpus_out {
        write_corpus(path, &corpus)?;
    }
    let dataset = model.dump_activations(&corpus)?;
    write_activation_dataset(&out, &dataset)?;
    println!(
        "dump: {} positive / {} negative states of dim {}; wrote {}",
        dataset.positive_count(),
        dataset.negative_count(),
        dataset.dim(),
        out.display()
    );
    Ok(())
}
