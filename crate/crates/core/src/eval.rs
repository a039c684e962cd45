//! Pose metrics, per-fold reports and the pairwise comparison pipeline
//! (Friedman gate, Shapiro-Wilk, paired t or Wilcoxon, Bonferroni).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::dataset::Sample;
use crate::dsp::{JOINTS, TARGET_FRAMES};
use crate::error::{Error, Result};
use maepose_tensor::TensorError;

/// Default PCK threshold in metres.
pub const PCK_THRESHOLD: f64 = 0.05;

fn joint_errors<'a>(pred: &'a [f32], gt: &'a [f32], metres_per_unit: [f64; 2]) -> Result<impl Iterator<Item = f64> + 'a> {
    if pred.len() != gt.len() || pred.len() % 2 != 0 {
        return Err(TensorError::Dimension(format!(
            "prediction has {} values, ground truth {}",
            pred.len(),
            gt.len()
        ))
        .into());
    }
    if metres_per_unit.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Config(format!("metres_per_unit must be positive, got {metres_per_unit:?}")));
    }
    let [sx, sy] = metres_per_unit;
    Ok(pred.chunks_exact(2).zip(gt.chunks_exact(2)).map(move |(p, g)| {
        let dx = (p[0] as f64 - g[0] as f64) * sx;
        let dy = (p[1] as f64 - g[1] as f64) * sy;
        dx.hypot(dy)
    }))
}

/// Mean per-joint position error in metres over `[.., 2]` coordinates.
pub fn mpjpe(pred: &[f32], gt: &[f32], metres_per_unit: [f64; 2]) -> Result<f64> {
    let n = pred.len() / 2;
    let sum: f64 = joint_errors(pred, gt, metres_per_unit)?.sum();
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Fraction of joints whose error is at most `threshold` metres (inclusive).
pub fn pck(pred: &[f32], gt: &[f32], metres_per_unit: [f64; 2], threshold: f64) -> Result<f64> {
    let n = pred.len() / 2;
    let hits = joint_errors(pred, gt, metres_per_unit)?.filter(|e| *e <= threshold).count();
    Ok(if n == 0 { 0.0 } else { hits as f64 / n as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipResult {
    pub id: String,
    pub action_id: usize,
    /// `[5, 13, 2]` normalised.
    pub pred: Vec<f32>,
    pub gt: Vec<f32>,
    pub mpjpe_m: f64,
    pub pck_05: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionScore {
    pub clips: usize,
    pub mpjpe_m: f64,
    pub pck_05: f64,
}

/// Test-set results for one held-out person. Fold-level metrics average
/// over every joint of every test clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub test_person: usize,
    pub mpjpe_m: f64,
    pub pck_05: f64,
    pub per_action: BTreeMap<usize, ActionScore>,
    pub clips: Vec<ClipResult>,
}

impl FoldReport {
    /// `pred` holds `[5, 13, 2]` coordinates per clip in `idx` order.
    pub fn new(test_person: usize, samples: &[Sample], idx: &[usize], pred: &[f32]) -> Result<Self> {
        let per = TARGET_FRAMES.len() * JOINTS * 2;
        if pred.len() != idx.len() * per {
            return Err(TensorError::Dimension(format!(
                "{} predictions for {} clips",
                pred.len() / per,
                idx.len()
            ))
            .into());
        }
        if idx.is_empty() {
            return Err(Error::Data(format!("fold {test_person} has no test clips")));
        }
        let mut clips = Vec::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            let s = &samples[i];
            let p = &pred[k * per..(k + 1) * per];
            clips.push(ClipResult {
                id: s.id.clone(),
                action_id: s.action_id,
                pred: p.to_vec(),
                gt: s.labels.clone(),
                mpjpe_m: mpjpe(p, &s.labels, s.metres_per_unit)?,
                pck_05: pck(p, &s.labels, s.metres_per_unit, PCK_THRESHOLD)?,
            });
        }
        let mean = |c: &[&ClipResult], f: fn(&ClipResult) -> f64| c.iter().map(|r| f(r)).sum::<f64>() / c.len() as f64;
        let mut groups: BTreeMap<usize, Vec<&ClipResult>> = BTreeMap::new();
        for c in &clips {
            groups.entry(c.action_id).or_default().push(c);
        }
        let per_action = groups
            .into_iter()
            .map(|(a, c)| {
                let score = ActionScore { clips: c.len(), mpjpe_m: mean(&c, |r| r.mpjpe_m), pck_05: mean(&c, |r| r.pck_05) };
                (a, score)
            })
            .collect();
        let all: Vec<&ClipResult> = clips.iter().collect();
        Ok(Self {
            test_person,
            mpjpe_m: mean(&all, |r| r.mpjpe_m),
            pck_05: mean(&all, |r| r.pck_05),
            per_action,
            clips,
        })
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Friedman test over `matrix[fold][method]`; returns (χ², p).
pub fn friedman(matrix: &[Vec<f64>]) -> Result<(f64, f64)> {
    let n = matrix.len();
    let k = matrix.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::Config(format!("friedman needs n >= 2 folds and k >= 2 methods, got {n}x{k}")));
    }
    if matrix.iter().any(|row| row.len() != k) {
        return Err(TensorError::Dimension("ragged metric matrix".into()).into());
    }
    let mut mean_rank = vec![0.0; k];
    for row in matrix {
        for (j, r) in average_ranks(row).into_iter().enumerate() {
            mean_rank[j] += r / n as f64;
        }
    }
    let centre = (k as f64 + 1.0) / 2.0;
    let ss: f64 = mean_rank.iter().map(|r| (r - centre).powi(2)).sum();
    let stat = 12.0 * n as f64 / (k as f64 * (k as f64 + 1.0)) * ss;
    let chi = ChiSquared::new((k - 1) as f64).expect("positive dof");
    Ok((stat, chi.sf(stat).clamp(0.0, 1.0)))
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Shapiro-Wilk W and p-value (Royston's AS R94 approximation).
pub fn shapiro_wilk(sample: &[f64]) -> Result<(f64, f64)> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::Config(format!("shapiro-wilk needs 3 <= n <= 5000, got {n}")));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    if x[n - 1] - x[0] <= 0.0 {
        return Err(Error::DegenerateSample("shapiro-wilk on a constant sample".into()));
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let ssq: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();

    let mut a = vec![0.0; n];
    if n == 3 {
        a[0] = -std::f64::consts::FRAC_1_SQRT_2;
        a[2] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let z = std_normal();
        let m: Vec<f64> = (1..=n).map(|i| z.inverse_cdf((i as f64 - 0.375) / (nf + 0.25))).collect();
        let mm: f64 = m.iter().map(|v| v * v).sum();
        let u = 1.0 / nf.sqrt();
        let an = m[n - 1] / mm.sqrt() + poly(&[0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056], u);
        let (eps, edge) = if n > 5 {
            let an1 = m[n - 2] / mm.sqrt() + poly(&[0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633], u);
            a[n - 2] = an1;
            a[1] = -an1;
            let e = (mm - 2.0 * m[n - 1].powi(2) - 2.0 * m[n - 2].powi(2)) / (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
            (e, 2)
        } else {
            ((mm - 2.0 * m[n - 1].powi(2)) / (1.0 - 2.0 * an * an), 1)
        };
        a[n - 1] = an;
        a[0] = -an;
        for i in edge..n - edge {
            a[i] = m[i] / eps.sqrt();
        }
    }
    let num: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
    let w = (num * num / ssq).min(1.0);

    if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - 0.75f64.sqrt().asin());
        return Ok((w, p.max(0.0)));
    }
    let mut y = (1.0 - w).ln();
    let (mu, sigma) = if n <= 11 {
        let gamma = poly(&[-2.273, 0.459], nf);
        if y >= gamma {
            return Ok((w, 1e-99));
        }
        y = -(gamma - y).ln();
        (poly(&[0.5440, -0.39978, 0.025054, -6.714e-4], nf), poly(&[1.3822, -0.77857, 0.062767, -0.0020322], nf).exp())
    } else {
        let ln = nf.ln();
        (poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln), poly(&[-0.4803, -0.082676, 0.0030302], ln).exp())
    };
    Ok((w, std_normal().sf((y - mu) / sigma)))
}

fn differences(a: &[f64], b: &[f64], min_n: usize) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(TensorError::Dimension(format!("paired samples of length {} and {}", a.len(), b.len())).into());
    }
    if a.len() < min_n {
        return Err(Error::Config(format!("paired test needs n >= {min_n}, got {}", a.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateSample("all paired differences are zero".into()));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub cohens_d: f64,
}

/// Two-sided paired t-test on `a − b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    let d = differences(a, b, 2)?;
    let (m, sd) = mean_std(&d);
    let scale = d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    // rounding noise in a constant shift counts as zero spread
    if sd <= 1e-12 * scale {
        return Err(Error::DegenerateSample("paired differences have zero variance".into()));
    }
    let n = d.len() as f64;
    let t = m / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive dof");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p, cohens_d: m / sd })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// Sum of the ranks of positive differences.
    pub w: f64,
    pub z: f64,
    pub p: f64,
    pub r: f64,
    /// Non-zero pairs.
    pub n: usize,
}

/// Wilcoxon signed-rank test on `a − b`: zero differences dropped, tied
/// magnitudes share their average rank, normal approximation with tie
/// variance correction and a 0.5 continuity correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon> {
    let d: Vec<f64> = differences(a, b, 1)?.into_iter().filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n < 5 {
        return Err(Error::DegenerateSample(format!("wilcoxon needs >= 5 non-zero differences, got {n}")));
    }
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&mags);
    let w: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut ties = 0.0;
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    for g in sorted.chunk_by(|x, y| x == y) {
        let t = g.len() as f64;
        ties += t * t * t - t;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let dev = w - mean;
    let z = dev.signum() * (dev.abs() - 0.5).max(0.0) / var.sqrt();
    let p = (2.0 * std_normal().sf(z.abs())).min(1.0);
    Ok(Wilcoxon { w, z, p, r: z.abs() / (2.0 * nf).sqrt(), n })
}

/// Bonferroni-adjusted p for `k` comparisons.
pub fn bonferroni(p: f64, k: usize) -> f64 {
    (p * k as f64).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFamily {
    PairedT,
    Wilcoxon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    D,
    R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pairwise {
    pub a: String,
    pub b: String,
    pub statistic: f64,
    pub p_raw: f64,
    pub p_adj: f64,
    pub effect: f64,
    pub effect_kind: EffectKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocReport {
    /// Per method: (W, p).
    pub shapiro: Vec<(f64, f64)>,
    pub family: TestFamily,
    pub comparisons: Vec<Pairwise>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub methods: Vec<String>,
    /// `metric[fold][method]`.
    pub metric: Vec<Vec<f64>>,
    pub friedman: (f64, f64),
    /// Absent when the Friedman test is not significant.
    pub posthoc: Option<PosthocReport>,
}

pub const ALPHA: f64 = 0.05;

/// Gated comparison of per-fold metrics, one column per method.
pub fn compare_methods(methods: &[(String, Vec<f64>)]) -> Result<StatsReport> {
    if methods.len() < 2 {
        return Err(Error::Config("compare_methods needs at least two methods".into()));
    }
    let folds = methods[0].1.len();
    if methods.iter().any(|(_, v)| v.len() != folds) {
        return Err(TensorError::Dimension("methods have different fold counts".into()).into());
    }
    let metric: Vec<Vec<f64>> = (0..folds).map(|f| methods.iter().map(|(_, v)| v[f]).collect()).collect();
    let fr = friedman(&metric)?;
    let names: Vec<String> = methods.iter().map(|(n, _)| n.clone()).collect();
    let mut report = StatsReport { methods: names, metric, friedman: fr, posthoc: None };
    if fr.1 >= ALPHA {
        return Ok(report);
    }
    let shapiro = methods.iter().map(|(_, v)| shapiro_wilk(v)).collect::<Result<Vec<_>>>()?;
    let family = if shapiro.iter().all(|(_, p)| *p >= ALPHA) { TestFamily::PairedT } else { TestFamily::Wilcoxon };
    let k = methods.len() * (methods.len() - 1) / 2;
    let mut comparisons = Vec::with_capacity(k);
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            let (a, b) = (&methods[i].1, &methods[j].1);
            let (statistic, p_raw, effect, effect_kind) = match family {
                TestFamily::PairedT => {
                    let t = paired_t(a, b)?;
                    (t.t, t.p, t.cohens_d, EffectKind::D)
                }
                TestFamily::Wilcoxon => {
                    let w = wilcoxon_signed_rank(a, b)?;
                    (w.w, w.p, w.r, EffectKind::R)
                }
            };
            comparisons.push(Pairwise {
                a: methods[i].0.clone(),
                b: methods[j].0.clone(),
                statistic,
                p_raw,
                p_adj: bonferroni(p_raw, k),
                effect,
                effect_kind,
            });
        }
    }
    report.posthoc = Some(PosthocReport { shapiro, family, comparisons });
    Ok(report)
}

impl StatsReport {
    /// Plain-text table: mean ± std per method, then the test results.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let width = self.methods.iter().map(String::len).max().unwrap_or(6).max(6);
        let _ = writeln!(s, "{:<width$}  {:>18}", "method", "MPJPE (m)");
        for (j, name) in self.methods.iter().enumerate() {
            let col: Vec<f64> = self.metric.iter().map(|row| row[j]).collect();
            let (m, sd) = mean_std(&col);
            let _ = writeln!(s, "{name:<width$}  {m:>8.4} ± {sd:<7.4}");
        }
        let (chi, p) = self.friedman;
        let _ = writeln!(s, "\nFriedman chi2 = {chi:.3}, p = {p:.4}");
        match &self.posthoc {
            None => {
                let _ = writeln!(s, "not significant at alpha = {ALPHA}; no pairwise tests");
            }
            Some(ph) => {
                let fam = match ph.family {
                    TestFamily::PairedT => "paired t (Cohen's d)",
                    TestFamily::Wilcoxon => "Wilcoxon signed-rank (r)",
                };
                let _ = writeln!(s, "pairwise: {fam}, Bonferroni k = {}", ph.comparisons.len());
                for c in &ph.comparisons {
                    let _ = writeln!(
                        s,
                        "  {} vs {}: stat {:.3}, p {:.4}, p_adj {:.4}, effect {:.3}",
                        c.a, c.b, c.statistic, c.p_raw, c.p_adj, c.effect
                    );
                }
            }
        }
        s
    }
}
