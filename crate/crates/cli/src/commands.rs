use std::str::FromStr;

use anyhow::{bail, Context, Result};
use lacuna_core::diophantine::DioCount;
use lacuna_core::discrepancy::{extreme_disc_1d, extreme_disc_2d, kh_check};
use lacuna_core::exactnum::sample_uniform_bits;
use lacuna_core::martingale::{build_schedule, Approximant, BlockSchedule, ScheduleParams};
use lacuna_core::stochastics::{clt_experiment, lil_discrepancy, lil_paths, CltParams, LilParams, Quantiles};
use lacuna_core::variation::{hk_lower, CenteredBox};
use lacuna_core::{
    check_hadamard_gap, count_all, frac_apply, growth_profile, required_bits, sample_uniform, star_disc,
    box_indicator_coeffs, sigma2_streaming, ExperimentReport, FourierPoly, GapRatio, LacunarySequence, LimitLaw,
    LacunaError, PointSet, Verdict, DEFAULT_GUARD_BITS,
};
use num_bigint::BigInt;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{FunctionSpec, Params, RunConfig};

pub const COMMANDS: [&str; 9] = ["gap-check", "sigma2", "dio", "disc", "clt", "lil", "lil-disc", "kh", "martingale"];

/// What a command hands back for writing.
pub struct Outcome {
    pub result: Value,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// The checked property did not hold; maps to exit code 2.
    pub failed: bool,
}

pub fn run(command: &str, cfg: &RunConfig) -> Result<Outcome> {
    match command {
        "gap-check" => gap_check(cfg),
        "sigma2" => sigma2(cfg),
        "dio" => dio(cfg),
        "disc" => disc(cfg),
        "clt" => clt(cfg),
        "lil" => lil(cfg),
        "lil-disc" => lil_disc(cfg),
        "kh" => kh(cfg),
        "martingale" => martingale(cfg),
        other => bail!("unknown command {other:?}"),
    }
}

fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone().with_context(|| format!("params.{name} is required"))
}

fn sequence(cfg: &RunConfig) -> Result<LacunarySequence> {
    let kind = cfg.sequence.clone().context("a [sequence] table is required")?;
    Ok(LacunarySequence::new(kind)?)
}

fn function(cfg: &RunConfig) -> Result<&FunctionSpec> {
    cfg.function.as_ref().context("a [function] table is required")
}

const DEFAULT_BOX_DEGREE: u64 = 16;

/// The function as a trigonometric polynomial.
fn polynomial(spec: &FunctionSpec) -> Result<FourierPoly> {
    let (p, fejer) = match spec {
        FunctionSpec::Cosine { fejer } => (FourierPoly::cosine(), fejer),
        FunctionSpec::CosinePair { fejer } => (FourierPoly::cosine_pair(), fejer),
        FunctionSpec::BoxIndicator { beta, gamma, fejer } => {
            let gamma = gamma.clone().unwrap_or_else(|| vec![DEFAULT_BOX_DEGREE; beta.len()]);
            (box_indicator_coeffs(beta, &gamma)?.poly, fejer)
        }
        FunctionSpec::File { path, fejer } => (FourierPoly::load(path)?, fejer),
    };
    Ok(match fejer {
        Some(g) => p.fejer_mean(*g),
        None => p,
    })
}

/// Shortest round-trip form; exponent notation for very small or large values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn gap_check(cfg: &RunConfig) -> Result<Outcome> {
    cfg.params.restrict("gap-check", &["q", "n", "j_max", "k_max", "norm"])?;
    let p = &cfg.params;
    let seq = sequence(cfg)?;
    let q = GapRatio::from_str(&need(&p.q, "q")?)?;
    let r = check_hadamard_gap(&seq, &q, need(&p.n, "n")?, p.j_max.unwrap_or(1), p.k_max.unwrap_or(1), p.norm.unwrap_or_default())?;
    let violation = r.first_violation.as_ref().map(|v| {
        let j: Vec<String> = v.j.iter().map(|x| x.to_string()).collect();
        format!("n={} k={} j={}", v.n, v.k, j.join(" "))
    });
    let row = vec![
        r.q.clone(),
        r.n_max.to_string(),
        r.j_max.to_string(),
        r.k_max.to_string(),
        serde_json::to_value(r.verdict)?.as_str().unwrap_or_default().to_string(),
        num(r.margin),
        r.checked.to_string(),
        r.skipped.to_string(),
        violation.unwrap_or_default(),
    ];
    Ok(Outcome {
        failed: r.verdict == Verdict::Fail,
        result: serde_json::to_value(&r)?,
        header: vec!["q", "n_max", "j_max", "k_max", "verdict", "margin", "checked", "skipped", "first_violation"],
        rows: vec![row],
    })
}

fn sigma2(cfg: &RunConfig) -> Result<Outcome> {
    cfg.params.restrict("sigma2", &["n"])?;
    let n = need(&cfg.params.n, "n")?;
    let seq = sequence(cfg)?;
    let f = polynomial(function(cfg)?)?;
    let s = sigma2_streaming(&f, &seq, n)?;
    let last = *s.last().context("n must be positive")?;
    let rows = s.iter().enumerate().map(|(i, &v)| vec![(i + 1).to_string(), num(v), num(v / (i + 1) as f64)]).collect();
    Ok(Outcome {
        result: json!({ "n": n, "sigma2": last, "sigma2_over_n": last / n as f64, "l2_norm_sq": f.l2_norm_sq() }),
        header: vec!["n", "sigma2", "sigma2_over_n"],
        rows,
        failed: false,
    })
}

fn dio(cfg: &RunConfig) -> Result<Outcome> {
    cfg.params.restrict("dio", &["n", "g", "nu", "n_list"])?;
    let p = &cfg.params;
    let seq = sequence(cfg)?;
    let (n, g) = (need(&p.n, "n")?, need(&p.g, "g")?);
    let c: DioCount = count_all(&seq, n, g)?;
    let mut result = json!({ "summary": c.summary() });
    if let Some(nu) = &p.nu {
        if nu.len() != seq.dim() {
            bail!("params.nu has {} entries, the sequence has dimension {}", nu.len(), seq.dim());
        }
        let key: Vec<BigInt> = nu.iter().map(|&v| BigInt::from(v)).collect();
        result["nu"] = json!(nu);
        result["count_at_nu"] = json!(c.count(&key));
    }
    if let Some(list) = &p.n_list {
        result["growth"] = serde_json::to_value(growth_profile(&seq, &[g], list)?)?;
    }
    let rows = c.rows().map(|(nu, k)| vec![nu, k.to_string()]).collect();
    Ok(Outcome { result, header: vec!["nu", "pairs"], rows, failed: false })
}

/// Points from a CSV file, or the orbit `frac(M_k x)`, `k = 1..=n`, of one
/// seeded sample `x`.
fn points(cfg: &RunConfig) -> Result<(PointSet, Value)> {
    let p = &cfg.params;
    if let Some(path) = &p.points {
        if p.n.is_some() || p.index.is_some() || p.bits.is_some() {
            bail!("params.points excludes the orbit params n, index and bits");
        }
        let set = PointSet::load(path)?;
        return Ok((set, json!({ "source": "file" })));
    }
    let seq = sequence(cfg)?;
    let n = need(&p.n, "n")?;
    let bits = match p.bits {
        Some(b) => b,
        None => required_bits(&seq, n, DEFAULT_GUARD_BITS)?,
    };
    let (seed, index) = (p.seed.unwrap_or(0), p.index.unwrap_or(0));
    let x = sample_uniform(seed, index, bits, seq.dim())?;
    let pts = (1..=n).map(|k| frac_apply(seq.get_matrix(k)?.as_ref(), &x)).collect::<lacuna_core::Result<Vec<_>>>()?;
    Ok((PointSet::new(pts)?, json!({ "source": "orbit", "n": n, "seed": seed, "index": index, "bits": bits })))
}

const DEFAULT_BUDGET: usize = 100_000;

fn disc(cfg: &RunConfig) -> Result<Outcome> {
    cfg.params.restrict("disc", &["points", "n", "seed", "index", "bits", "budget"])?;
    let (set, source) = points(cfg)?;
    let star = star_disc(&set, cfg.params.budget.unwrap_or(DEFAULT_BUDGET), cfg.params.seed.unwrap_or(0))?;
    let extreme = match set.dim() {
        1 => Some(extreme_disc_1d(&set)),
        2 => Some(extreme_disc_2d(&set)),
        _ => None,
    };
    // the extreme sweep is optional; a cost refusal is reported, not raised
    let (extreme, skipped) = match extreme {
        Some(Ok(r)) => (Some(r), None),
        Some(Err(e @ LacunaError::CostGuard { .. })) => (None, Some(e.to_string())),
        Some(Err(e)) => return Err(e.into()),
        None => (None, Some("no exact extreme sweep for d > 2".to_string())),
    };
    let mut rows = Vec::new();
    for (label, r) in [("star", Some(&star)), ("extreme", extreme.as_ref())] {
        if let Some(r) = r {
            rows.push(vec![label.to_string(), num(r.value), r.method.clone(), r.degenerate.to_string()]);
        }
    }
    Ok(Outcome {
        result: json!({ "points": source, "size": set.len(), "dim": set.dim(), "star": star, "extreme": extreme, "extreme_skipped": skipped }),
        header: vec!["kind", "value", "method", "degenerate"],
        rows,
        failed: false,
    })
}

/// Report without the per-sample matrix, which goes to the table.
fn experiment(rep: ExperimentReport) -> Result<Outcome> {
    let rows = rep.rows().map(|(i, n, v)| vec![i.to_string(), n.to_string(), num(v)]).collect();
    let mut result = serde_json::to_value(&rep)?;
    if let Some(obj) = result.as_object_mut() {
        obj.remove("values");
    }
    Ok(Outcome { result, header: vec!["sample", "n", "value"], rows, failed: false })
}

fn positive_samples(p: &Params) -> Result<usize> {
    let s = need(&p.samples, "samples")?;
    if s == 0 {
        bail!("params.samples must be positive");
    }
    Ok(s)
}

fn clt(cfg: &RunConfig) -> Result<Outcome> {
    cfg.params.restrict("clt", &["n_list", "samples", "seed", "bits", "normalization", "laws"])?;
    let p = &cfg.params;
    let params = CltParams {
        n_list: need(&p.n_list, "n_list")?,
        samples: positive_samples(p)?,
        seed: p.seed.unwrap_or(0),
        bits: p.bits,
        normalization: p.normalization.unwrap_or_default(),
        laws: p.laws.clone().unwrap_or_else(|| vec![LimitLaw::StandardNormal]),
    };
    experiment(clt_experiment(&polynomial(function(cfg)?)?, &sequence(cfg)?, &params)?)
}

fn lil_params(p: &Params) -> Result<LilParams> {
    Ok(LilParams {
        n_min: need(&p.n_min, "n_min")?,
        n_max: need(&p.n_max, "n_max")?,
        samples: positive_samples(p)?,
        seed: p.seed.unwrap_or(0),
        bits: p.bits,
    })
}

fn lil(cfg: &RunConfig) -> Result<Outcome> {
    cfg.params.restrict("lil", &["n_min", "n_max", "samples", "seed", "bits"])?;
    experiment(lil_paths(&polynomial(function(cfg)?)?, &sequence(cfg)?, &lil_params(&cfg.params)?)?)
}

fn lil_disc(cfg: &RunConfig) -> Result<Outcome> {
    cfg.params.restrict("lil-disc", &["n_min", "n_max", "samples", "seed", "bits", "mode"])?;
    if cfg.function.is_some() {
        bail!("lil-disc takes no [function]");
    }
    let mode = cfg.params.mode.unwrap_or_default();
    experiment(lil_discrepancy(&sequence(cfg)?, &lil_params(&cfg.params)?, mode)?)
}

fn kh(cfg: &RunConfig) -> Result<Outcome> {
    cfg.params.restrict("kh", &["points", "n", "seed", "index", "bits", "budget", "level", "z_samples"])?;
    let (set, source) = points(cfg)?;
    let spec = function(cfg)?;
    let (r, v_hk, exact) = match spec {
        FunctionSpec::BoxIndicator { beta, fejer: None, .. } => {
            let f = CenteredBox::new(beta.clone())?;
            let v = f.hk_variation();
            (kh_check(&f, v, &set, 0.0)?, v, true)
        }
        _ => {
            let f = polynomial(spec)?;
            let v = hk_lower(&f, cfg.params.level.unwrap_or(6), cfg.params.z_samples.unwrap_or(4))?.total;
            (kh_check(&f, v, &set, f.mean())?, v, false)
        }
    };
    let row = vec![num(r.lhs), num(r.rhs), r.holds.to_string(), r.certified.to_string(), num(v_hk), exact.to_string()];
    Ok(Outcome {
        failed: !r.holds,
        result: json!({ "points": source, "size": set.len(), "v_hk": v_hk, "variation_exact": exact, "check": r }),
        header: vec!["lhs", "rhs", "holds", "certified", "v_hk", "variation_exact"],
        rows: vec![row],
    })
}

/// Smallest schedule whose first `k` blocks are complete.
fn schedule_for_blocks(seq: &LacunarySequence, k: usize, sp: &ScheduleParams) -> Result<BlockSchedule> {
    let mut n = 1024usize;
    loop {
        let s = build_schedule(seq, n, sp)?;
        if s.blocks.len() > k || (s.blocks.len() == k && !s.truncated) {
            return Ok(build_schedule(seq, s.blocks[k - 1].main.end - 1, sp)?);
        }
        n = n.checked_mul(2).context("schedule index overflow")?;
    }
}

fn martingale(cfg: &RunConfig) -> Result<Outcome> {
    cfg.params.restrict("martingale", &["q", "g", "eta", "c_scale", "c_prime", "n", "k_max", "samples", "seed"])?;
    let p = &cfg.params;
    let seq = sequence(cfg)?;
    let mut sp = ScheduleParams::new(
        GapRatio::from_str(&need(&p.q, "q")?)?.to_f64(),
        seq.dim(),
        need(&p.g, "g")?,
        need(&p.eta, "eta")?,
    );
    sp.c_scale = p.c_scale;
    sp.c_prime = p.c_prime;
    let s = match (p.n, p.k_max) {
        (Some(n), None) => build_schedule(&seq, n, &sp)?,
        (None, Some(0)) => bail!("params.k_max must be positive"),
        (None, Some(k)) => schedule_for_blocks(&seq, k, &sp)?,
        _ => bail!("give exactly one of params.n and params.k_max"),
    };
    let complete = s.blocks.len() - s.truncated as usize;
    let samples = p.samples.unwrap_or(0);
    let mut moments: Vec<Option<(f64, f64, f64)>> = vec![None; s.blocks.len()];
    let mut summary = Value::Null;
    if samples > 0 {
        if complete == 0 {
            bail!("no complete block to sample");
        }
        let f = polynomial(function(cfg)?)?;
        let ap = Approximant::new(&f, &seq, &s)?;
        let bits = ap.required_bits(complete);
        let seed = p.seed.unwrap_or(0);
        let stats = (0..samples as u64)
            .into_par_iter()
            .map(|i| ap.block_stats(&sample_uniform_bits(seed, i, bits, seq.dim())?, complete, true))
            .collect::<lacuna_core::Result<Vec<_>>>()?;
        let mut gap_q = Vec::new();
        for (k, slot) in moments.iter_mut().take(complete).enumerate() {
            let inc: Vec<f64> = stats.iter().map(|st| st.increments[k]).collect();
            let m = inc.iter().sum::<f64>() / samples as f64;
            let var = if samples > 1 { inc.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (samples - 1) as f64 } else { 0.0 };
            let gap_max = stats.iter().map(|st| st.sup_gap[k]).fold(0.0, f64::max);
            *slot = Some((m, var, gap_max));
            gap_q.push(Quantiles::of(&stats.iter().map(|st| st.sup_gap[k]).collect::<Vec<_>>()));
        }
        summary = json!({ "samples": samples, "seed": seed, "bits": bits, "blocks": complete, "sup_gap_quantiles": gap_q });
    }
    let rows = s
        .blocks
        .iter()
        .zip(&moments)
        .map(|(b, m)| {
            let mut row = vec![
                b.k.to_string(),
                b.gap.start.to_string(),
                b.gap.end.to_string(),
                b.main.start.to_string(),
                b.main.end.to_string(),
                b.level.to_string(),
            ];
            match m {
                Some((mean, var, gap)) => row.extend([num(*mean), num(*var), num(*gap)]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            row
        })
        .collect();
    Ok(Outcome {
        result: json!({ "schedule": s, "increments": summary }),
        header: vec!["k", "gap_start", "gap_end", "main_start", "main_end", "level", "increment_mean", "increment_var", "sup_gap_max"],
        rows,
        failed: false,
    })
}
