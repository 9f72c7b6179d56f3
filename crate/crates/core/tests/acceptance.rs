//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line (straight to stderr, so it shows up
//! without `--nocapture`) and then asserts.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use subsets::combinations;
use lmextract::api::{ApiConfig, ApiMode, CompletionApi, Session};
use lmextract::extract::{collect_query_matrix, extract_hidden_dim, extract_layer};
use lmextract::harness::{
    attack_prompt, defense_sweep, lower_bound_report, median, run_attack_suite, run_suite, table4_suite,
    AttackConfig, AttackKind, Defense, ExperimentConfig, Metric, Report, Transport,
};
use lmextract::recover::{
    recover_binary_search, shortest_path_bounds, Centering, ConstraintGraph, HyperrectangleAttack, IncrementalBounds,
};
use lmextract::victim::{build_victim, NormKind, Precision, SpoofConfig, VictimSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, pass: bool, detail: impl AsRef<str>) {
    let line = format!("criterion {n}: {} {}\n", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {n} failed: {}", detail.as_ref());
}

fn config(victim: VictimSpec, api: ApiConfig, attack: AttackConfig, seeds: std::ops::Range<u64>) -> ExperimentConfig {
    ExperimentConfig::new(victim, api, attack).with_seeds(seeds)
}

fn extraction(kind: AttackKind, queries: Option<usize>) -> AttackConfig {
    let mut a = AttackConfig::new(kind);
    a.queries = queries;
    a
}

fn all_logits() -> ApiConfig {
    ApiConfig::new(ApiMode::AllLogits)
}

fn dims(report: &Report) -> Vec<Option<usize>> {
    report.runs.iter().map(|r| r.extracted_dim).collect()
}

#[test]
fn criterion_01_dimension_exact() {
    let mut detail = Vec::new();
    let mut pass = true;
    for h in [8usize, 64, 256] {
        let start = Instant::now();
        let c = config(VictimSpec::new(4 * h, h, 0), all_logits(), extraction(AttackKind::ExtractDim, Some(2 * h)), 0..20);
        let report = run_attack_suite(&c).unwrap();
        let exact = dims(&report).iter().filter(|d| **d == Some(h)).count();
        let slowest = report.timing.iter().map(|t| t.wall_seconds).fold(0.0, f64::max);
        pass &= exact == 20 && slowest < 10.0;
        detail.push(format!("h={h}: {exact}/20 exact, slowest {slowest:.2}s (suite {:.1}s)", start.elapsed().as_secs_f64()));
    }
    verdict(1, pass, detail.join("; "));
}

#[test]
fn criterion_02_planted_deficit() {
    let mut a = extraction(AttackKind::ExtractDim, Some(1000));
    a.subset = Some(1000);
    let c = config(VictimSpec::new(2048, 768, 0).with_rank_deficit(11), all_logits(), a, 0..5);
    let found = dims(&run_attack_suite(&c).unwrap());
    let hits = found.iter().filter(|d| **d == Some(757)).count();
    verdict(2, hits == 5, format!("h=768 deficit 11: {hits}/5 seeds extract 757 ({found:?})"));
}

#[test]
fn criterion_03_fp16_dimension() {
    let victim = VictimSpec::new(256, 64, 0).with_precision(Precision::Fp16);
    let c = config(victim, all_logits(), extraction(AttackKind::ExtractDim, Some(128)), 0..20);
    let found = dims(&run_attack_suite(&c).unwrap());
    let close = found.iter().filter(|d| d.is_some_and(|d| d.abs_diff(64) <= 2)).count();
    verdict(3, close >= 18, format!("fp16 h=64: {close}/20 within ±2"));
}

#[test]
fn criterion_04_layer_fidelity() {
    let run = |emission: Precision| {
        let c = config(
            VictimSpec::new(1000, 64, 0),
            all_logits().with_emission(emission),
            extraction(AttackKind::ExtractLayer, Some(256)),
            0..3,
        );
        run_attack_suite(&c).unwrap()
    };
    let worst = |r: &Report| r.runs.iter().map(|x| x.rms.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    let ratio = |r: &Report| {
        r.runs.iter().map(|x| x.baseline_rms.unwrap_or(0.0) / x.rms.unwrap_or(f64::INFINITY)).fold(f64::INFINITY, f64::min)
    };
    let exact = run(Precision::Fp64);
    let half = run(Precision::Fp16);
    let (e, f) = (worst(&exact), worst(&half));
    let (re, rf) = (ratio(&exact), ratio(&half));
    let pass = e < 1e-9 && f < 5e-4 && re >= 100.0 && rf >= 100.0;
    verdict(4, pass, format!("fp64 rms {e:.2e}, fp16 rms {f:.2e}, baseline/extracted ≥ {:.0}", re.min(rf)));
}

#[test]
fn criterion_05_closed_form_costs() {
    let victim = VictimSpec::new(1000, 16, 0);
    let topk = ApiConfig::new(ApiMode::TopKLogprobsWithBias { k: 5 });
    let run = |api: &ApiConfig, attack: AttackConfig| {
        let report = run_attack_suite(&config(victim.clone(), api.clone(), attack, 0..3)).unwrap();
        assert!(report.runs.iter().all(|r| r.ok()), "{:?}", report.runs);
        report.runs
    };
    let reference = run(&topk, AttackConfig::new(AttackKind::Reference));
    let sm = run(&topk, AttackConfig::new(AttackKind::KLogprob));
    let binarized = run(&ApiConfig::new(ApiMode::Top1BinaryBias), AttackConfig::new(AttackKind::Binarized));
    let eps = 100.0 / 1024.0;
    let mut bisect = AttackConfig::new(AttackKind::BinarySearch);
    bisect.epsilon = Some(eps);
    let bisect = run(&ApiConfig::new(ApiMode::ArgmaxOnlyWithBias), bisect);

    let per_token = (100.0f64 / eps).log2().ceil();
    let pass_ref = reference.iter().all(|r| r.queries_per_logit == Some(0.25));
    let pass_sm = sm.iter().all(|r| (r.queries - r.retry_queries) as f64 / r.logits as f64 == 0.2);
    let pass_bin = binarized.iter().all(|r| r.queries_per_logit == Some(1.0));
    // One unbiased query finds the reference token; each other token then
    // costs exactly the bisection depth.
    let pass_bs = bisect.iter().all(|r| (r.queries - 1) as f64 / r.logits as f64 == per_token);
    verdict(
        5,
        pass_ref && pass_sm && pass_bin && pass_bs,
        format!(
            "reference {:?}, k-logprob before retries {}, binarized {:?}, binary search {} per token (expected {per_token})",
            reference[0].queries_per_logit,
            (sm[0].queries - sm[0].retry_queries) as f64 / sm[0].logits as f64,
            binarized[0].queries_per_logit,
            (bisect[0].queries - 1) as f64 / bisect[0].logits as f64,
        ),
    );
}

#[test]
fn criterion_06_precision_ordering() {
    let report = run_suite("table4", &table4_suite(1000, 16, &(0..10).collect::<Vec<_>>())).unwrap();
    let bits = |label: &str| {
        let values: Vec<f64> = report.runs_for(label).filter_map(|r| r.bits).collect();
        assert_eq!(values.len(), 10, "{label} had failed runs");
        median(&values).unwrap()
    };
    let b: Vec<(&str, f64)> =
        ["logprob-4", "sherman-morrison", "binarized", "one-of-n", "hyperrectangle", "binary-search"]
            .into_iter()
            .map(|l| (l, bits(l)))
            .collect();
    let pass = b[0].1 > b[1].1 && b[1].1 > b[2].1 && b[3].1 > b[4].1 && b[4].1 > b[5].1;
    let text: Vec<String> = b.iter().map(|(l, v)| format!("{l} {v:.1}")).collect();
    verdict(6, pass, format!("median bits: {}", text.join(", ")));
}

#[test]
fn criterion_07_interval_containment() {
    let (l, rounds, slack) = (301, 2000, 1e-9);
    let mut checked = 0usize;
    let mut violations = 0usize;
    for seed in 0..10u64 {
        let v = Arc::new(build_victim(&VictimSpec::new(l, 16, seed)).unwrap());
        let prompt = attack_prompt(l, seed, 0);
        let truth = v.logits(&prompt).unwrap();
        for centering in [Centering::OneOfN, Centering::Midpoint] {
            let s = Session::new(v.clone(), ApiConfig::new(ApiMode::ArgmaxOnlyWithBias)).unwrap();
            let mut run = HyperrectangleAttack::new(&s, &prompt, centering, 100.0).unwrap();
            assert_eq!(run.batch_tokens(0).len(), 300);
            for _ in 0..rounds {
                run.step(0).unwrap();
                violations += run.bounds().violations(&truth, slack).len();
                checked += l - 1;
            }
        }
        let s = Session::new(v.clone(), ApiConfig::new(ApiMode::ArgmaxOnlyWithBias)).unwrap();
        let b = recover_binary_search(&s, &prompt, 1e-6, 100.0).unwrap();
        violations += b.violations(&truth, slack).len();
        checked += l - 1;
    }
    verdict(7, violations == 0, format!("{violations} violations over {checked} token-rounds (10 seeds, N=300, T={rounds})"));
}

/// Maximum of `objective · x` over `{x : a x <= b}` by enumerating every
/// vertex (intersection of `dim` tight constraints).
fn lp_max_by_vertices(a: &[Vec<f64>], b: &[f64], objective: &[f64]) -> f64 {
    let dim = objective.len();
    let mut best = f64::NEG_INFINITY;
    for rows in combinations(a.len(), dim) {
        let m = DMatrix::from_fn(dim, dim, |i, j| a[rows[i]][j]);
        let rhs = DVector::from_fn(dim, |i, _| b[rows[i]]);
        let Some(x) = m.lu().solve(&rhs) else { continue };
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }
        if a.iter().zip(b).all(|(row, &bi)| row.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= bi + 1e-9) {
            best = best.max(objective.iter().zip(x.iter()).map(|(p, q)| p * q).sum());
        }
    }
    best
}

mod subsets {
    /// All `k`-subsets of `0..n` in lexicographic order.
    pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(k);
        fn go(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if current.len() == k {
                out.push(current.clone());
                return;
            }
            for i in start..n {
                if n - i < k - current.len() {
                    break;
                }
                current.push(i);
                go(i + 1, n, k, current, out);
                current.pop();
            }
        }
        go(0, n, k, &mut current, &mut out);
        out
    }
}

#[test]
fn criterion_08_shortest_path_matches_lp() {
    let bound = 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let observations = rng.random_range(1..=3);
        // Gaps x_i = z_i - z_0 for a reference token that wins unbiased.
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..0.0)).collect();
        let mut incremental = IncrementalBounds::new(n + 1, bound);
        let mut graph = ConstraintGraph::with_lower_prior(n + 1, bound);
        for i in 1..=n {
            graph.add_constraint(0, i, 0.0);
        }
        // Variables x_1..x_n; rows of `a x <= b`.
        let mut a: Vec<Vec<f64>> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        for i in 0..n {
            let mut up = vec![0.0; n];
            up[i] = 1.0;
            a.push(up);
            b.push(0.0);
            let mut down = vec![0.0; n];
            down[i] = -1.0;
            a.push(down);
            b.push(bound);
        }
        for _ in 0..observations {
            let mut bias = vec![0.0; n + 1];
            for v in bias.iter_mut().skip(1) {
                *v = rng.random_range(0.0..bound);
            }
            let score = |i: usize| if i == 0 { 0.0 } else { x[i - 1] + bias[i] };
            let winner = (0..=n).max_by(|&p, &q| score(p).total_cmp(&score(q))).unwrap();
            incremental.observe_argmax(winner, &bias).unwrap();
            graph.add_argmax_observation(winner, &bias);
            // score(j) <= score(winner) for every j.
            for j in (0..=n).filter(|&j| j != winner) {
                let mut row = vec![0.0; n];
                if j > 0 {
                    row[j - 1] += 1.0;
                }
                if winner > 0 {
                    row[winner - 1] -= 1.0;
                }
                a.push(row);
                b.push(bias[winner] - bias[j]);
            }
        }
        let sp = shortest_path_bounds(&graph).unwrap();
        for i in 1..=n {
            let mut e = vec![0.0; n];
            e[i - 1] = 1.0;
            let beta = lp_max_by_vertices(&a, &b, &e);
            e[i - 1] = -1.0;
            let alpha = -lp_max_by_vertices(&a, &b, &e);
            for err in [
                (incremental.beta(i) - beta).abs(),
                (incremental.alpha(i) - alpha).abs(),
                (sp.beta[i] - beta).abs(),
                (sp.alpha[i] - alpha).abs(),
            ] {
                worst = worst.max(err);
            }
        }
    }
    verdict(8, worst <= 1e-9, format!("200 instances, N ≤ 6, max |bound - LP| = {worst:.2e}"));
}

#[test]
fn criterion_09_lower_bound() {
    let start = Instant::now();
    let rows = lower_bound_report(
        &VictimSpec::new(1000, 16, 0),
        &ApiConfig::new(ApiMode::ArgmaxOnlyWithBias),
        &[6.0, 12.0, 18.0, 23.0],
        &[0, 1],
        12.0,
    )
    .expect("no attack may beat the bound");
    let elapsed = start.elapsed().as_secs_f64();
    let at18 = rows.iter().find(|r| r.bits == 18.0).unwrap();
    let above = rows.iter().all(|r| r.one_of_n >= r.lower_bound);
    let pass = above && at18.one_of_n <= at18.lower_bound + 1.5 && elapsed < 300.0;
    let text: Vec<String> =
        rows.iter().map(|r| format!("{} bits: bound {:.2}, one-of-n {:.2}", r.bits, r.lower_bound, r.one_of_n)).collect();
    verdict(9, pass, format!("{} ({elapsed:.0}s)", text.join("; ")));
}

#[test]
fn criterion_10_norm_fingerprint() {
    let victims: Vec<(VictimSpec, &str)> = (0..20)
        .map(|s| (VictimSpec::new(300, 16, s).with_norm(NormKind::LayerNorm, true), "layer_norm"))
        .chain((0..15).map(|s| (VictimSpec::new(300, 16, 100 + s).with_norm(NormKind::RmsNorm, false), "rms_norm")))
        .chain((0..5).map(|s| (VictimSpec::new(300, 16, 200 + s).with_norm(NormKind::RmsNorm, true), "rms_norm")))
        .collect();
    let mut correct = [0usize; 2];
    for (spec, expected) in &victims {
        let seed = spec.seed;
        let c = config(spec.clone(), all_logits(), extraction(AttackKind::ExtractNorm, Some(64)), seed..seed + 1);
        let r = run_attack_suite(&c).unwrap();
        if r.runs[0].norm_verdict.as_deref() == Some(*expected) {
            correct[usize::from(*expected == "rms_norm")] += 1;
        }
    }
    verdict(
        10,
        correct == [20, 20],
        format!("LayerNorm {}/20, RMSNorm {}/20 (5 with output bias)", correct[0], correct[1]),
    );
}

#[test]
fn criterion_11_orthogonal_recovery() {
    let mut worst = (0.0f64, 0.0f64);
    for h in [4usize, 8, 16, 32] {
        let mut a = AttackConfig::new(AttackKind::ExtractLayerOrthogonal);
        a.dim = Some(h);
        let r = run_attack_suite(&config(VictimSpec::new(256, h, 0), all_logits(), a, 0..3)).unwrap();
        for run in &r.runs {
            worst.0 = worst.0.max(run.orthogonality_defect.unwrap_or(f64::INFINITY));
            worst.1 = worst.1.max(run.sphere_residual.unwrap_or(f64::INFINITY));
        }
    }
    verdict(
        11,
        worst.0 < 1e-6 && worst.1 < 1e-8,
        format!("h ∈ {{4,8,16,32}}: max ‖OᵀO − I‖_F {:.2e}, max sphere residual {:.2e}", worst.0, worst.1),
    );
}

#[test]
fn criterion_12_defenses() {
    // Quantization.
    let base = config(VictimSpec::new(512, 64, 0), all_logits(), extraction(AttackKind::ExtractDim, Some(160)), 0..3);
    let quant = run_suite("quant", &defense_sweep(&base, &Defense::Quantization { bits: vec![8, 4] }).unwrap()).unwrap();
    let quant_ok = quant.runs.iter().all(|r| r.extracted_dim == Some(64));

    // Noise: rms non-decreasing in sigma.
    let mut layer = extraction(AttackKind::ExtractLayer, Some(200));
    layer.dim = Some(32);
    let base = config(VictimSpec::new(500, 32, 0), all_logits(), layer, 0..3);
    let sigmas = vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1];
    let noise = run_suite("noise", &defense_sweep(&base, &Defense::Noise { sigmas }).unwrap()).unwrap();
    let curve: Vec<f64> = ["none", "noise=1e-4", "noise=1e-3", "noise=1e-2", "noise=1e-1"]
        .iter()
        .map(|l| noise.aggregate_for(l, Metric::Rms).unwrap().mean)
        .collect();
    let noise_ok = curve.windows(2).all(|w| w[0] <= w[1]);
    let curve: Vec<String> = curve.iter().map(|r| format!("{r:.1e}")).collect();

    // Spoofing 768 -> 1024.
    let mut dim = extraction(AttackKind::ExtractDim, Some(1300));
    dim.subset = Some(1300);
    let spoof = config(VictimSpec::new(2048, 768, 0).with_spoof(SpoofConfig::new(1024)), all_logits(), dim, 0..1);
    let spoofed = run_attack_suite(&spoof).unwrap().runs[0].extracted_dim;
    let spoof_ok = spoofed == Some(1024);

    // API restrictions.
    let base = config(VictimSpec::new(200, 16, 0), all_logits(), AttackConfig::new(AttackKind::ExtractDim), 0..2);
    let xor = run_suite("xor", &defense_sweep(&base, &Defense::BiasXorLogprobs).unwrap()).unwrap();
    let failed = |label: &str| xor.runs_for(label).all(|r| r.error_code.as_deref() == Some("bias_xor_logprobs"));
    let ok = |label: &str| xor.runs_for(label).all(|r| r.ok());
    let xor_ok = failed("reference+bias-xor-logprobs")
        && failed("k-logprob+bias-xor-logprobs")
        && ok("reference")
        && ok("one-of-n+bias-xor-logprobs")
        && ok("extract-dim+bias-xor-logprobs");
    let block = run_suite("block", &defense_sweep(&base, &Defense::BlockList).unwrap()).unwrap();
    let blocked = |label: &str| block.runs_for(label).all(|r| r.error_code.as_deref() == Some("blocklist_only"));
    let block_ok = blocked("reference+block-list")
        && blocked("k-logprob+block-list")
        && block.runs_for("extract-dim+block-list").all(|r| r.extracted_dim == Some(16));

    verdict(
        12,
        quant_ok && noise_ok && spoof_ok && xor_ok && block_ok,
        format!(
            "quantization dims unchanged {quant_ok}; noise rms [{}] monotone {noise_ok}; spoof 768→{spoofed:?}; bias-xor-logprobs {xor_ok}; block-list {block_ok}",
            curve.join(", ")
        ),
    );
}

#[test]
fn criterion_13_wire_equivalence() {
    // Whole pipeline through the harness.
    let layer = extraction(AttackKind::ExtractLayer, Some(96));
    let local = config(VictimSpec::new(400, 32, 0), all_logits(), layer, 0..2);
    let remote = local.clone().with_transport(Transport::Loopback);
    let a = run_attack_suite(&local).unwrap();
    let b = run_attack_suite(&remote).unwrap();
    let same_rows = a.runs == b.runs;

    // Stolen matrices and ledgers directly, including the server's view.
    let v = Arc::new(build_victim(&VictimSpec::new(400, 32, 1)).unwrap());
    let in_process = Session::new(v.clone(), all_logits()).unwrap();
    let server = lmextract::wire::serve(v.clone(), all_logits(), "127.0.0.1:0").unwrap();
    let client = lmextract::wire::RemoteSession::connect(&server.url()).unwrap().with_session("acceptance");
    let qa = collect_query_matrix(&in_process, 96, None, 3).unwrap();
    let qb = collect_query_matrix(&client, 96, None, 3).unwrap();
    let (h, _) = extract_hidden_dim(&qb).unwrap();
    let wa = extract_layer(&qa, h).unwrap().w;
    let wb = extract_layer(&qb, h).unwrap().w;
    let rms = ((&wa - &wb).norm_squared() / wa.len() as f64).sqrt();
    let ledgers = in_process.ledger() == client.ledger() && server.session_ledger("acceptance") == Some(client.ledger());
    server.shutdown().unwrap();

    verdict(
        13,
        same_rows && rms < 1e-8 && ledgers,
        format!("harness rows identical {same_rows}; stolen-layer rms difference {rms:.1e}; ledgers identical {ledgers}"),
    );
}
