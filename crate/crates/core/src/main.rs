use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;

use lmextract::api::{ApiConfig, ApiMode};
use lmextract::extract::random_prompts;
use lmextract::harness::{
    defense_sweep, lower_bound_report, run_attack_suite, run_suite, table3_suite, table4_suite, AttackConfig,
    AttackKind, Defense, ExperimentConfig, Report, Transport,
};
use lmextract::matfile;
use lmextract::victim::{build_victim, NormKind, Precision, SpoofConfig, VictimSpec};

#[derive(Parser)]
#[command(name = "lmextract", version, about = "Extraction attacks against simulated language model APIs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a victim or dump its ground truth.
    Victim {
        #[command(subcommand)]
        action: VictimAction,
    },
    /// Serve a victim over HTTP until interrupted.
    Serve {
        #[command(flatten)]
        victim: VictimArgs,
        #[command(flatten)]
        api: ApiArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Run a logit-recovery attack (reference, k-logprob, single-logprob,
    /// binarized, binary-search, hyperrectangle, one-of-n, multi-token).
    Attack {
        #[arg(value_name = "NAME")]
        attack: String,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Run an extraction pipeline: dim, layer, layer-orthogonal or norm.
    Extract {
        target: String,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Sweep a defense (noise, quantization, spoofing, bias-xor-logprobs,
    /// block-list) against the configured attack.
    Sweep {
        defense: String,
        /// Attack to run against victim-side defenses.
        #[arg(long, default_value = "extract-dim")]
        attack: String,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Run an experiment file, or a named suite (table3, table4).
    Run {
        /// Experiment TOML file or suite name.
        what: String,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate measured query costs against the information-theoretic bound
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
}

#[derive(Subcommand)]
enum VictimAction {
    /// Validate a victim spec and print it as TOML.
    Build {
        #[command(flatten)]
        victim: VictimArgs,
        /// Also write the spec to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write W, per-prompt hidden states and the prompts themselves.
    ExportTruth {
        #[command(flatten)]
        victim: VictimArgs,
        #[arg(long, default_value = "truth")]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        prompts: usize,
    },
}

#[derive(Subcommand)]
enum ReportKind {
    /// Argmax-only query cost against the information-theoretic minimum.
    LowerBound {
        #[command(flatten)]
        victim: VictimArgs,
        #[command(flatten)]
        api: ApiArgs,
        #[arg(long, value_delimiter = ',', default_value = "6,18,23")]
        bits: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Query-per-logit cap for midpoint centering.
        #[arg(long, default_value_t = 12.0)]
        midpoint_cap: f64,
    },
}

#[derive(Args, Clone, Default)]
struct VictimArgs {
    /// Victim spec TOML; flags below override its keys.
    #[arg(long = "victim-config")]
    victim_config: Option<PathBuf>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// none, rmsnorm or layernorm.
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    norm_bias: bool,
    /// fp64, fp32 or fp16.
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    deficit: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    quant_bits: Option<u8>,
    #[arg(long)]
    spoof: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct ApiArgs {
    /// all-logits, topk, top1-binary, argmax or generation.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    bias_bound: Option<f64>,
    #[arg(long)]
    bias_max_entries: Option<usize>,
    /// Precision of emitted values: fp64, fp32 or fp16.
    #[arg(long)]
    emission: Option<String>,
    #[arg(long)]
    bias_xor_logprobs: bool,
    #[arg(long)]
    block_list: bool,
    #[arg(long)]
    overhead: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct ExperimentArgs {
    /// Experiment TOML; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[command(flatten)]
    victim: VictimArgs,
    #[command(flatten)]
    api: ApiArgs,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// in-process or loopback.
    #[arg(long)]
    transport: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    transcript: bool,
    #[arg(long)]
    bias: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    guard: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    queries_per_logit: Option<f64>,
    #[arg(long)]
    target_bits: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    positions: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    expected_dim: Option<usize>,
    #[arg(long)]
    prompts: Option<usize>,
    /// Print the full JSON report instead of the summary.
    #[arg(long)]
    json: bool,
}

fn parse_name<T: DeserializeOwned>(what: &str, s: &str) -> anyhow::Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase())).with_context(|| format!("invalid {what} `{s}`"))
}

impl VictimArgs {
    fn apply(&self, mut spec: VictimSpec) -> anyhow::Result<VictimSpec> {
        if let Some(l) = self.l {
            spec.vocab_size = l;
        }
        if let Some(h) = self.h {
            spec.hidden_dim = h;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(n) = &self.norm {
            spec.norm_kind = parse_name::<NormKind>("norm", n)?;
        }
        if self.norm_bias {
            spec.norm_bias_enabled = true;
        }
        if let Some(p) = &self.precision {
            spec.precision = p.parse::<Precision>().map_err(anyhow::Error::msg)?;
        }
        if let Some(d) = self.deficit {
            spec.planted_rank_deficit = d;
        }
        if let Some(s) = self.noise {
            spec = spec.with_noise(s);
        }
        if let Some(b) = self.quant_bits {
            spec = spec.with_quantization(b);
        }
        if let Some(t) = self.spoof {
            spec = spec.with_spoof(SpoofConfig::new(t));
        }
        spec.validate()?;
        Ok(spec)
    }

    fn spec(&self) -> anyhow::Result<VictimSpec> {
        let base = match &self.victim_config {
            Some(p) => VictimSpec::load(p)?,
            None => VictimSpec::new(1000, 16, 0),
        };
        self.apply(base)
    }
}

impl ApiArgs {
    fn apply(&self, mut api: ApiConfig) -> anyhow::Result<ApiConfig> {
        let k = self.k.unwrap_or_else(|| api.mode.max_logprobs().max(5));
        if let Some(m) = &self.mode {
            api.mode = ApiMode::parse(m, k)?;
        } else if let (Some(k), ApiMode::TopKLogprobsWithBias { .. } | ApiMode::GenerationLogprobs { .. }) =
            (self.k, api.mode)
        {
            api.mode = ApiMode::parse(api.mode.name(), k)?;
        }
        let r = &mut api.restrictions;
        if let Some(b) = self.bias_bound {
            r.bias_bound = b;
        }
        if let Some(n) = self.bias_max_entries {
            r.max_entries = n;
        }
        if let Some(p) = &self.emission {
            r.emission_precision = p.parse::<Precision>().map_err(anyhow::Error::msg)?;
        }
        r.bias_xor_logprobs |= self.bias_xor_logprobs;
        r.block_list_only |= self.block_list;
        if let Some(o) = self.overhead {
            r.overhead_per_query = o;
        }
        Ok(api)
    }
}

impl ExperimentArgs {
    fn config(&self, kind: Option<AttackKind>) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => {
                let kind = kind.unwrap_or(AttackKind::ExtractDim);
                let k = self.api.k.unwrap_or(5);
                let victim = self.victim.spec()?;
                let mut c = ExperimentConfig::new(
                    victim.clone(),
                    ApiConfig::new(kind.default_mode(k)),
                    AttackConfig::new(kind),
                );
                c.name = kind.name().into();
                c
            }
        };
        if let Some(kind) = kind {
            if c.attack.kind != kind {
                c.attack.kind = kind;
                if self.api.mode.is_none() {
                    c.api.mode = kind.default_mode(self.api.k.unwrap_or(5));
                }
            }
        }
        if self.config.is_some() {
            c.victim = self.victim.apply(c.victim)?;
        }
        c.api = self.api.apply(c.api)?;
        if let Some(n) = &self.name {
            c.name = n.clone();
        }
        if let Some(s) = &self.seeds {
            c.seeds = s.clone();
        } else if self.config.is_none() {
            c.seeds = vec![c.victim.seed];
        }
        if let Some(t) = &self.transport {
            c.transport = parse_name::<Transport>("transport", &t.replace('-', "_"))?;
        }
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        if self.out.is_some() {
            c.output.dir = self.out.clone();
        }
        c.output.transcript |= self.transcript;
        let a = &mut c.attack;
        macro_rules! overlay {
            ($($f:ident),*) => { $( if self.$f.is_some() { a.$f = self.$f; } )* };
        }
        overlay!(bias, epsilon, guard, rounds, queries_per_logit, target_bits, max_rounds, positions, queries, subset, dim, expected_dim);
        if self.api.k.is_some() {
            a.k = self.api.k;
        }
        if let Some(p) = self.prompts {
            a.prompts = p;
        }
        c.validate()?;
        Ok(c)
    }
}

fn print_report(report: &Report, json: bool) -> anyhow::Result<()> {
    if json {
        println!("{}", report.to_json()?);
        return Ok(());
    }
    println!("# {} config={} revision={}", report.name, &report.config_hash[..12], report.revision);
    for a in &report.aggregates {
        println!("{:<28} {:<18} {:>14.6e} ± {:<10.3e} (n={})", a.label, a.metric, a.mean, a.std, a.n);
    }
    for r in report.runs.iter().filter(|r| !r.ok()) {
        println!(
            "{:<28} seed={} prompt={} failed [{}]: {}",
            r.label,
            r.seed,
            r.prompt,
            r.error_code.as_deref().unwrap_or("error"),
            r.error.as_deref().unwrap_or_default()
        );
    }
    for r in report.runs.iter().filter(|r| r.norm_verdict.is_some()) {
        println!("{:<28} seed={} norm={}", r.label, r.seed, r.norm_verdict.as_deref().unwrap_or_default());
    }
    Ok(())
}

fn finish(report: &Report, out: Option<&Path>, json: bool) -> anyhow::Result<()> {
    if let Some(dir) = out {
        report.write_to(dir)?;
    }
    print_report(report, json)
}

fn export_truth(spec: &VictimSpec, out: &Path, prompts: usize) -> anyhow::Result<()> {
    let v = build_victim(spec)?;
    std::fs::create_dir_all(out)?;
    matfile::save(out.join("weights.mat"), v.effective_weights())?;
    let ps = random_prompts(spec.vocab_size, prompts, spec.seed);
    let h = v.hidden_dim();
    let mut hidden = DMatrix::zeros(ps.len(), h);
    for (i, p) in ps.iter().enumerate() {
        hidden.row_mut(i).copy_from(&v.hidden(p)?.values().transpose());
    }
    matfile::save(out.join("hidden.mat"), &hidden)?;
    std::fs::write(out.join("prompts.json"), serde_json::to_string(&ps)?)?;
    std::fs::write(out.join("victim.toml"), spec.to_toml_string()?)?;
    println!("wrote {} ({}x{} weights, {} prompts)", out.display(), spec.vocab_size, h, ps.len());
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Victim { action: VictimAction::Build { victim, out } } => {
            let spec = victim.spec()?;
            build_victim(&spec)?;
            let text = spec.to_toml_string()?;
            if let Some(p) = out {
                std::fs::write(p, &text)?;
            }
            print!("{text}");
        }
        Command::Victim { action: VictimAction::ExportTruth { victim, out, prompts } } => {
            export_truth(&victim.spec()?, &out, prompts)?;
        }
        Command::Serve { victim, api, bind } => {
            let spec = victim.spec()?;
            let api = api.apply(ApiConfig::new(ApiMode::AllLogits))?;
            eprintln!("serving {} API on {bind}", api.mode.name());
            lmextract::wire::run_until_signal(Arc::new(build_victim(&spec)?), api, &bind)?;
        }
        Command::Attack { attack, exp } => {
            let kind = AttackKind::parse(&attack)?;
            if kind.is_extraction() {
                bail!("`{attack}` is an extraction pipeline; use `extract`");
            }
            finish(&run_attack_suite(&exp.config(Some(kind))?)?, None, exp.json)?;
        }
        Command::Extract { target, exp } => {
            let kind = AttackKind::parse(&format!("extract-{target}"))?;
            finish(&run_attack_suite(&exp.config(Some(kind))?)?, None, exp.json)?;
        }
        Command::Sweep { defense, attack, exp } => {
            let base = exp.config(Some(AttackKind::parse(&attack)?))?;
            let defense = Defense::parse(&defense, base.victim.hidden_dim)?;
            let mut configs = defense_sweep(&base, &defense)?;
            for c in &mut configs {
                c.output.dir = None;
            }
            let report = run_suite(&format!("sweep-{}", defense.name()), &configs)?;
            finish(&report, exp.out.as_deref(), exp.json)?;
        }
        Command::Run { what, seeds, out } => {
            let seeds = seeds.unwrap_or_else(|| vec![0, 1, 2]);
            let report = match what.as_str() {
                "table3" => run_suite("table3", &table3_suite(&seeds))?,
                "table4" => run_suite("table4", &table4_suite(1000, 16, &seeds))?,
                path => {
                    let mut c = ExperimentConfig::load(path)?;
                    if out.is_some() {
                        c.output.dir = None;
                    }
                    run_attack_suite(&c)?
                }
            };
            finish(&report, out.as_deref(), false)?;
        }
        Command::Report { kind: ReportKind::LowerBound { victim, api, bits, seeds, midpoint_cap } } => {
            let spec = victim.spec()?;
            let api = api.apply(ApiConfig::new(ApiMode::ArgmaxOnlyWithBias))?;
            let rows = lower_bound_report(&spec, &api, &bits, &seeds, midpoint_cap)?;
            println!("bits,lower_bound,one_of_n,binary_search,midpoint");
            for r in rows {
                let mid = r.midpoint.map(|m| format!("{m:.3}")).unwrap_or_else(|| "capped".into());
                println!("{},{:.3},{:.3},{:.3},{mid}", r.bits, r.lower_bound, r.one_of_n, r.binary_search);
            }
        }
    }
    Ok(())
}
