use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{AttackConfig, AttackKind, ExperimentConfig, Transport};
use super::metrics::{bits_of_precision, random_baseline_rms};
use super::report::{Report, RunRecord, Timing};
use crate::api::{ApiConfig, CompletionApi, Recorder, Session};
use crate::error::{Error, Result};
use crate::extract::{
    align_affine, collect_query_matrix, detect_norm_layer, extract_hidden_dim, extract_hidden_dim_adaptive,
    extract_layer, extract_layer_orthogonal, orthogonal_query_count, orthogonality_defect, random_prompts,
    residual_symmetry, QueryMatrix, SpectrumReport,
};
use crate::recover::{
    lower_bound_per_logit, recover_binarized, recover_binary_search, recover_k_logprob, recover_multi_token,
    recover_reference_token, Centering, HyperrectangleAttack, IntervalBounds, KLogprobConfig, MultiTokenConfig,
    RecoveredLogits,
};
use crate::victim::{build_victim, TokenId, Victim, VictimSpec};
use crate::wire::{serve, RemoteSession, ServerHandle};

const PROMPT_STREAM: u64 = 0x5eed_0001;
const SUBSET_STREAM: u64 = 0x5eed_0002;
const DEFAULT_EXPECTED_DIM: usize = 32;
const ADAPTIVE_MAX_ROWS: usize = 1 << 16;
const DEFAULT_MAX_ROUNDS: usize = 1_000_000;

/// Where each run sends its queries.
enum Endpoint {
    InProcess(Arc<Victim>, ApiConfig),
    Loopback(ServerHandle),
}

impl Endpoint {
    fn open(victim: Arc<Victim>, api: &ApiConfig, transport: Transport) -> Result<Self> {
        Ok(match transport {
            Transport::InProcess => Endpoint::InProcess(victim, api.clone()),
            Transport::Loopback => Endpoint::Loopback(serve(victim, api.clone(), "127.0.0.1:0")?),
        })
    }

    fn session(&self, name: String) -> Result<Box<dyn CompletionApi>> {
        Ok(match self {
            Endpoint::InProcess(v, api) => Box::new(Session::new(v.clone(), api.clone())?),
            Endpoint::Loopback(server) => Box::new(RemoteSession::connect(&server.url())?.with_session(name)),
        })
    }

    fn close(self) -> Result<()> {
        match self {
            Endpoint::InProcess(..) => Ok(()),
            Endpoint::Loopback(server) => server.shutdown(),
        }
    }
}

/// The prompt a logit-recovery run attacks.
pub fn attack_prompt(vocab: usize, seed: u64, index: usize) -> Vec<TokenId> {
    random_prompts(vocab, index + 1, seed ^ PROMPT_STREAM).swap_remove(index)
}

struct Job {
    seed: u64,
    prompt: usize,
}

struct Outcome {
    record: RunRecord,
    timing: Timing,
    spectrum: Option<SpectrumReport>,
}

/// Run `config` over all of its seeds (and prompts) on a bounded worker
/// pool, aggregate, and write outputs when an output directory is set.
pub fn run_attack_suite(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let prompts = if config.attack.kind.is_extraction() { 1 } else { config.attack.prompts };
    let victims: Vec<(u64, Arc<Victim>)> = config
        .seeds
        .iter()
        .map(|&seed| Ok((seed, Arc::new(build_victim(&VictimSpec { seed, ..config.victim.clone() })?))))
        .collect::<Result<_>>()?;
    let endpoints: Vec<Endpoint> = victims
        .iter()
        .map(|(_, v)| Endpoint::open(v.clone(), &config.api, config.transport))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Job)> = (0..victims.len())
        .flat_map(|i| (0..prompts).map(move |p| (i, Job { seed: 0, prompt: p })))
        .map(|(i, mut job)| {
            job.seed = victims[i].0;
            (i, job)
        })
        .collect();

    let transcript = match (&config.output.dir, config.output.transcript) {
        (Some(dir), true) => {
            std::fs::create_dir_all(dir)?;
            Some(dir.join("transcript.jsonl"))
        }
        _ => None,
    };
    let transcript = Mutex::new(transcript);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        jobs.par_iter()
            .map(|(i, job)| {
                let victim = &victims[*i].1;
                let session = endpoints[*i].session(format!("{}-{}-{}", config.name, job.seed, job.prompt))?;
                let record_to = transcript.lock().expect("transcript lock").take();
                let start = Instant::now();
                let result = match record_to {
                    Some(path) => {
                        let recorder = Recorder::to_file(session, path)?;
                        let r = execute(&config.attack, &recorder, victim, job.seed, job.prompt);
                        recorder.flush()?;
                        r
                    }
                    None => execute(&config.attack, session.as_ref(), victim, job.seed, job.prompt),
                };
                let wall_seconds = start.elapsed().as_secs_f64();
                let (mut record, spectrum) = match result {
                    Ok(out) => out,
                    Err(e) => (
                        RunRecord {
                            error_code: e.reject_code().map(|c| c.as_str().to_string()),
                            error: Some(e.to_string()),
                            ..Default::default()
                        },
                        None,
                    ),
                };
                record.label = config.name.clone();
                record.attack = config.attack.kind.name().into();
                record.seed = job.seed;
                record.prompt = job.prompt;
                let timing = Timing { label: config.name.clone(), seed: job.seed, prompt: job.prompt, wall_seconds };
                Ok(Outcome { record, timing, spectrum })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for e in endpoints {
        e.close()?;
    }

    let mut report = Report::new(config.name.clone(), config.hash());
    let mut spectrum = None;
    for o in outcomes {
        report.runs.push(o.record);
        report.timing.push(o.timing);
        if spectrum.is_none() {
            spectrum = o.spectrum;
        }
    }
    report.aggregate(&config.metrics);
    if let Some(dir) = &config.output.dir {
        report.write_to(dir)?;
        if let Some(s) = spectrum {
            s.write_csv(std::fs::File::create(dir.join("spectrum.csv"))?)?;
        }
    }
    Ok(report)
}

/// One attack run against one victim.
pub fn execute(
    attack: &AttackConfig,
    api: &dyn CompletionApi,
    victim: &Victim,
    seed: u64,
    prompt_index: usize,
) -> Result<(RunRecord, Option<SpectrumReport>)> {
    if attack.kind.is_extraction() {
        return execute_extraction(attack, api, victim, seed);
    }
    let l = victim.vocab_size();
    let prompt = attack_prompt(l, seed, prompt_index);
    let truth = victim.logits(&prompt)?;
    let bound = attack.bias.unwrap_or(api.descriptor().restrictions.bias_bound);
    let record = match attack.kind {
        AttackKind::Reference => from_logits(&recover_reference_token(api, &prompt, attack.bias.unwrap_or(40.0))?, &truth)?,
        AttackKind::KLogprob | AttackKind::SingleLogprob => {
            let mut c = KLogprobConfig::default();
            if let Some(b) = attack.bias {
                c.bias = b;
            }
            if let Some(g) = attack.guard {
                c.guard = g;
            }
            c.k = if attack.kind == AttackKind::SingleLogprob { Some(1) } else { attack.k };
            from_logits(&recover_k_logprob(api, &prompt, &c)?, &truth)?
        }
        AttackKind::Binarized => from_logits(&recover_binarized(api, &prompt)?, &truth)?,
        AttackKind::BinarySearch => {
            let eps = match (attack.epsilon, attack.target_bits, attack.queries_per_logit) {
                (Some(e), _, _) => e,
                (None, Some(bits), _) => 2f64.powf(-bits),
                (None, None, Some(q)) => bound / 2f64.powf(q.floor()),
                _ => bound / 1024.0,
            };
            let mut r = from_intervals(&recover_binary_search(api, &prompt, eps, bound)?, &truth)?;
            r.lower_bound = Some(lower_bound_per_logit(bound, eps, 1));
            r
        }
        AttackKind::Hyperrectangle | AttackKind::OneOfN => {
            let centering = if attack.kind == AttackKind::OneOfN { Centering::OneOfN } else { Centering::Midpoint };
            let mut run = HyperrectangleAttack::new(api, &prompt, centering, bound)?;
            let max_rounds = attack.max_rounds.unwrap_or(DEFAULT_MAX_ROUNDS);
            let mut lower_bound = None;
            if let Some(bits) = attack.target_bits {
                let eps = 2f64.powf(-bits);
                run.run_until_width(eps, max_rounds)?;
                lower_bound = Some(lower_bound_per_logit(bound, eps, api.descriptor().restrictions.max_entries));
            } else if let Some(q) = attack.queries_per_logit {
                let budget = (q * (l - 1) as f64).round() as u64;
                let start = api.ledger().queries;
                'outer: loop {
                    for b in 0..run.batch_count() {
                        if api.ledger().queries - start >= budget || run.batch_rounds(b) >= max_rounds || run.resolved() {
                            break 'outer;
                        }
                        run.step(b)?;
                    }
                }
            } else {
                run.run_rounds(attack.rounds.unwrap_or(100).min(max_rounds))?;
            }
            let mut r = from_intervals(&run.bounds(), &truth)?;
            r.lower_bound = lower_bound;
            r
        }
        AttackKind::MultiToken => {
            let m = attack.positions.unwrap_or(4);
            let mut c = MultiTokenConfig::default();
            if let Some(b) = attack.bias {
                c.bias = b;
            }
            let recovered = recover_multi_token(api, &prompt, m, &c)?;
            let mut bits = 0.0;
            let mut missing = 0;
            let mut prefix = prompt.clone();
            for r in &recovered {
                let b = bits_of_precision(&victim.logits(&prefix)?, r)?;
                bits += b.bits / m as f64;
                missing += b.missing;
                prefix.push(c.forced);
            }
            let cost = recovered[0].cost;
            let logits = recovered.iter().map(RecoveredLogits::recovered).sum::<usize>();
            RunRecord {
                bits: Some(bits),
                missing: Some(missing),
                logits,
                queries: cost.queries,
                tokens: cost.total_tokens(),
                queries_per_logit: Some(cost.queries as f64 / logits.max(1) as f64),
                tokens_per_logit: Some(cost.total_tokens() as f64 / logits.max(1) as f64),
                ..Default::default()
            }
        }
        _ => unreachable!("extraction handled above"),
    };
    Ok((record, None))
}

fn from_logits(r: &RecoveredLogits, truth: &[f64]) -> Result<RunRecord> {
    let b = bits_of_precision(truth, r)?;
    let n = r.recovered().max(1) as f64;
    Ok(RunRecord {
        bits: Some(b.bits),
        missing: Some(b.missing),
        logits: r.recovered(),
        queries: r.cost.queries,
        retry_queries: r.retry_queries,
        tokens: r.cost.total_tokens(),
        queries_per_logit: Some(r.queries_per_logit()),
        tokens_per_logit: Some(r.cost.total_tokens() as f64 / n),
        ..Default::default()
    })
}

fn from_intervals(bounds: &IntervalBounds, truth: &[f64]) -> Result<RunRecord> {
    let mid = bounds.midpoints();
    let b = bits_of_precision(truth, &mid)?;
    let logits = bounds.alpha.len() - 1;
    Ok(RunRecord {
        bits: Some(b.bits),
        missing: Some(b.missing),
        violations: Some(bounds.violations(truth, 1e-9).len()),
        logits,
        queries: bounds.cost.queries,
        tokens: bounds.cost.total_tokens(),
        queries_per_logit: Some(bounds.queries_per_logit()),
        tokens_per_logit: Some(bounds.cost.total_tokens() as f64 / logits.max(1) as f64),
        ..Default::default()
    })
}

/// Random sorted subset of `size` token ids.
pub fn token_subset(vocab: usize, size: usize, seed: u64) -> Result<Vec<TokenId>> {
    if size == 0 || size > vocab {
        return Err(Error::Config(format!("subset size {size} must lie in 1..={vocab}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SUBSET_STREAM);
    let mut tokens: Vec<TokenId> = sample(&mut rng, vocab, size).into_iter().map(|t| t as TokenId).collect();
    tokens.sort_unstable();
    Ok(tokens)
}

fn rows_of(w: &nalgebra::DMatrix<f64>, tokens: Option<&[TokenId]>) -> nalgebra::DMatrix<f64> {
    match tokens {
        None => w.clone(),
        Some(t) => nalgebra::DMatrix::from_fn(t.len(), w.ncols(), |i, j| w[(t[i] as usize, j)]),
    }
}

fn execute_extraction(
    attack: &AttackConfig,
    api: &dyn CompletionApi,
    victim: &Victim,
    seed: u64,
) -> Result<(RunRecord, Option<SpectrumReport>)> {
    let l = api.descriptor().vocab_size;
    let subset = attack.subset.map(|s| token_subset(l, s, seed)).transpose()?;
    let subset = subset.as_deref();
    let start = api.ledger();
    let collect = |n: usize| collect_query_matrix(api, n, subset, seed);
    let adaptive = || -> Result<(usize, SpectrumReport, QueryMatrix)> {
        let expected = attack.expected_dim.unwrap_or(DEFAULT_EXPECTED_DIM);
        let a = extract_hidden_dim_adaptive(api, expected, subset, seed, ADAPTIVE_MAX_ROWS)?;
        Ok((a.dim, a.spectrum, a.matrix))
    };
    let dim_of = |q: &QueryMatrix| -> Result<(usize, Option<SpectrumReport>)> {
        match attack.dim {
            Some(d) => Ok((d, None)),
            None => extract_hidden_dim(q).map(|(d, s)| (d, Some(s))),
        }
    };

    let mut record = RunRecord::default();
    let spectrum = match attack.kind {
        AttackKind::ExtractDim => {
            let (dim, spectrum) = match attack.queries {
                Some(n) => extract_hidden_dim(&collect(n)?)?,
                None => {
                    let (d, s, _) = adaptive()?;
                    (d, s)
                }
            };
            record.extracted_dim = Some(dim);
            Some(spectrum)
        }
        AttackKind::ExtractNorm => {
            let q = match attack.queries {
                Some(n) => collect(n)?,
                None => adaptive()?.2,
            };
            let d = detect_norm_layer(&q)?;
            record.extracted_dim = Some(d.dim_before);
            record.norm_verdict = Some(serde_json::to_value(d.verdict)?.as_str().unwrap_or_default().to_string());
            Some(d.spectrum_before)
        }
        AttackKind::ExtractLayer => {
            let q = collect(attack.queries.unwrap_or(2 * l))?;
            let (dim, spectrum) = dim_of(&q)?;
            let stolen = extract_layer(&q, dim)?;
            let truth = rows_of(victim.effective_weights(), subset);
            record.extracted_dim = Some(dim);
            record.rms = Some(align_affine(&stolen.w, &truth)?.rms);
            record.baseline_rms = Some(random_baseline_rms(&truth, dim, seed)?);
            spectrum
        }
        AttackKind::ExtractLayerOrthogonal => {
            let n = match (attack.queries, attack.dim) {
                (Some(n), _) => n,
                (None, Some(h)) => 2 * orthogonal_query_count(h),
                (None, None) => {
                    return Err(Error::Config("orthogonal extraction needs `queries` or `dim`".into()));
                }
            };
            let q = collect(n)?;
            let (dim, spectrum) = dim_of(&q)?;
            let fit = extract_layer_orthogonal(&q, dim)?;
            let truth = rows_of(&victim.folded_projection(), subset);
            let o = residual_symmetry(&fit.layer.w, &truth)?;
            record.extracted_dim = Some(dim);
            record.rms = Some(align_affine(&fit.layer.w, &truth)?.rms);
            record.orthogonality_defect = Some(orthogonality_defect(&o));
            record.sphere_residual = Some(fit.sphere_residual);
            spectrum
        }
        _ => unreachable!("logit recovery handled by execute"),
    };
    let cost = api.ledger().since(&start);
    record.queries = cost.queries;
    record.tokens = cost.total_tokens();
    Ok((record, spectrum))
}
