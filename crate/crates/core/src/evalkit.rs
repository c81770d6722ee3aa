//! Scalar-score evaluation: presentation-attack error rates, operating
//! point selection, and the leave-one-attack-type-out runner.
//!
//! Decision rule everywhere: a sample is called an attack iff its score is
//! strictly greater than the threshold.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{Split, TruthLabel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub truth: TruthLabel,
    pub attack_type: Option<String>,
    pub split: Split,
}

impl ScoredSample {
    pub fn new(
        score: f64,
        truth: TruthLabel,
        attack_type: Option<String>,
        split: Split,
    ) -> Result<ScoredSample> {
        let s = ScoredSample {
            score,
            truth,
            attack_type,
            split,
        };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        if !self.score.is_finite() {
            return Err(Error::invalid(format!("score {} is not finite", self.score)));
        }
        if self.truth == TruthLabel::Attack && self.attack_type.is_none() {
            return Err(Error::invalid("attack sample is missing its instrument type"));
        }
        if self.truth == TruthLabel::BonaFide && self.attack_type.is_some() {
            return Err(Error::invalid("bona fide sample carries an instrument type"));
        }
        Ok(())
    }
}

fn check_all(samples: &[ScoredSample]) -> Result<()> {
    for s in samples {
        s.check()?;
    }
    Ok(())
}

/// Highest per-instrument-type miss rate: for each attack type, the
/// fraction of its samples classified bona fide (score <= threshold), then
/// the maximum over types.
pub fn apcer(samples: &[ScoredSample], threshold: f64) -> Result<f64> {
    check_all(samples)?;
    let mut per_type: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in samples {
        if s.truth != TruthLabel::Attack {
            continue;
        }
        let ty = s.attack_type.as_deref().expect("checked above");
        let slot = per_type.entry(ty).or_insert((0, 0));
        slot.1 += 1;
        if s.score <= threshold {
            slot.0 += 1;
        }
    }
    if per_type.is_empty() {
        return Err(Error::invalid("no attack samples to rate"));
    }
    Ok(per_type
        .values()
        .map(|&(miss, total)| miss as f64 / total as f64)
        .fold(0.0, f64::max))
}

pub fn per_type_apcer(samples: &[ScoredSample], threshold: f64) -> Result<BTreeMap<String, f64>> {
    check_all(samples)?;
    let mut per_type: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for s in samples {
        if s.truth != TruthLabel::Attack {
            continue;
        }
        let ty = s.attack_type.clone().expect("checked above");
        let slot = per_type.entry(ty).or_insert((0, 0));
        slot.1 += 1;
        if s.score <= threshold {
            slot.0 += 1;
        }
    }
    if per_type.is_empty() {
        return Err(Error::invalid("no attack samples to rate"));
    }
    Ok(per_type
        .into_iter()
        .map(|(k, (miss, total))| (k, miss as f64 / total as f64))
        .collect())
}

/// Fraction of bona fide samples classified as attacks (score > threshold).
pub fn bpcer(samples: &[ScoredSample], threshold: f64) -> Result<f64> {
    check_all(samples)?;
    let mut reject = 0usize;
    let mut total = 0usize;
    for s in samples {
        if s.truth != TruthLabel::BonaFide {
            continue;
        }
        total += 1;
        if s.score > threshold {
            reject += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("no bona fide samples to rate"));
    }
    Ok(reject as f64 / total as f64)
}

pub fn acer(samples: &[ScoredSample], threshold: f64) -> Result<f64> {
    Ok((apcer(samples, threshold)? + bpcer(samples, threshold)?) / 2.0)
}

/// Pooled acceptance rate of attacks, ignoring type boundaries.
fn far(samples: &[ScoredSample], threshold: f64) -> Result<f64> {
    let mut accept = 0usize;
    let mut total = 0usize;
    for s in samples {
        if s.truth != TruthLabel::Attack {
            continue;
        }
        total += 1;
        if s.score <= threshold {
            accept += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("no attack samples to rate"));
    }
    Ok(accept as f64 / total as f64)
}

fn frr(samples: &[ScoredSample], threshold: f64) -> Result<f64> {
    bpcer(samples, threshold)
}

/// Threshold that balances pooled acceptance and rejection rates on the
/// given set. Candidates are midpoints of consecutive distinct scores plus
/// one point past each end; ties resolve to the lower threshold.
pub fn eer_threshold(samples: &[ScoredSample]) -> Result<f64> {
    check_all(samples)?;
    let mut scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    if scores.is_empty() {
        return Err(Error::invalid("no samples to balance"));
    }
    scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    scores.dedup();
    let mut candidates = vec![scores[0] - 1.0];
    for pair in scores.windows(2) {
        candidates.push((pair[0] + pair[1]) / 2.0);
    }
    candidates.push(scores[scores.len() - 1] + 1.0);

    let mut best = f64::INFINITY;
    let mut best_t = candidates[0];
    for &t in &candidates {
        let diff = (far(samples, t)? - frr(samples, t)?).abs();
        if diff < best {
            best = diff;
            best_t = t;
        }
    }
    Ok(best_t)
}

/// Half total error rate: balance on `dev`, average the pooled error pair
/// on `test`.
pub fn hter(dev: &[ScoredSample], test: &[ScoredSample]) -> Result<f64> {
    let t = eer_threshold(dev)?;
    Ok((far(test, t)? + frr(test, t)?) / 2.0)
}

/// Smallest threshold whose bona fide rejection rate stays at or below
/// `target_percent` on the given set.
pub fn threshold_at_bpcer(samples: &[ScoredSample], target_percent: f64) -> Result<f64> {
    check_all(samples)?;
    if !target_percent.is_finite() || target_percent <= 0.0 || target_percent > 100.0 {
        return Err(Error::invalid(format!(
            "target rate {target_percent}% outside (0, 100]"
        )));
    }
    let mut bona: Vec<f64> = samples
        .iter()
        .filter(|s| s.truth == TruthLabel::BonaFide)
        .map(|s| s.score)
        .collect();
    if bona.is_empty() {
        return Err(Error::invalid("no bona fide samples to calibrate on"));
    }
    bona.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let n = bona.len();
    let needed = (100.0 / target_percent).ceil() as usize;
    if n < needed {
        log::warn!(
            "only {n} bona fide samples; the {target_percent}% operating point needs {needed} to be meaningful"
        );
    }
    let k = (target_percent / 100.0 * n as f64).floor() as usize;
    if k >= n {
        Ok(bona[0])
    } else {
        Ok(bona[n - k - 1])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    /// Held-out instrument for leave-one-out folds.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attack_type: Option<String>,
    pub threshold: f64,
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    pub per_type_apcer: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hter: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Rates on `test` at a fixed threshold.
pub fn evaluate_at(protocol: &str, threshold: f64, test: &[ScoredSample]) -> Result<EvalReport> {
    Ok(EvalReport {
        protocol: protocol.to_string(),
        attack_type: None,
        threshold,
        apcer: apcer(test, threshold)?,
        bpcer: bpcer(test, threshold)?,
        acer: acer(test, threshold)?,
        per_type_apcer: per_type_apcer(test, threshold)?,
        hter: None,
    })
}

/// Same-corpus protocol: pick the 1% bona fide rejection operating point on
/// dev, rate the test split, and attach the balanced error as well.
pub fn intra_report(dev: &[ScoredSample], test: &[ScoredSample]) -> Result<EvalReport> {
    let threshold = threshold_at_bpcer(dev, 1.0)?;
    let mut report = evaluate_at("intra", threshold, test)?;
    report.hter = Some(hter(dev, test)?);
    Ok(report)
}

/// Cross-corpus protocol: operating point from the source corpus dev split,
/// rates from the target corpus test split.
pub fn cross_report(source_dev: &[ScoredSample], target_test: &[ScoredSample]) -> Result<EvalReport> {
    let threshold = threshold_at_bpcer(source_dev, 1.0)?;
    let mut report = evaluate_at("cross", threshold, target_test)?;
    report.hter = Some(hter(source_dev, target_test)?);
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooOutcome {
    pub folds: Vec<EvalReport>,
    /// Mean and population standard deviation of the fold ACERs.
    pub mean: f64,
    pub std: f64,
}

/// Leave-one-attack-type-out: for each type the fitter must train without
/// it and return scored dev and test samples, where the returned test
/// attacks are exactly the held-out type and dev contains none of it.
pub fn run_loo_protocol<F>(attack_types: &[String], mut fit_and_score: F) -> Result<LooOutcome>
where
    F: FnMut(&str) -> Result<Vec<ScoredSample>>,
{
    if attack_types.is_empty() {
        return Err(Error::invalid("no attack types to hold out"));
    }
    let unique: BTreeSet<&String> = attack_types.iter().collect();
    if unique.len() != attack_types.len() {
        return Err(Error::invalid("duplicate attack type in hold-out list"));
    }
    let mut per_type = Vec::new();
    for held in attack_types {
        let scored = fit_and_score(held)?;
        for s in &scored {
            s.check()?;
            if let Some(ty) = &s.attack_type {
                match s.split {
                    Split::Test if ty != held => {
                        return Err(Error::invalid(format!(
                            "held-out fold {held} scored a test attack of type {ty}"
                        )));
                    }
                    Split::Train | Split::Dev if ty == held => {
                        return Err(Error::invalid(format!(
                            "held-out type {held} leaked into {:?} scores",
                            s.split
                        )));
                    }
                    _ => {}
                }
            }
        }
        let dev: Vec<ScoredSample> = scored
            .iter()
            .filter(|s| s.split == Split::Dev)
            .cloned()
            .collect();
        let test: Vec<ScoredSample> = scored
            .iter()
            .filter(|s| s.split == Split::Test)
            .cloned()
            .collect();
        let threshold = threshold_at_bpcer(&dev, 1.0)?;
        let mut report = evaluate_at("loo", threshold, &test)?;
        report.attack_type = Some(held.clone());
        report.hter = Some(hter(&dev, &test)?);
        per_type.push(report);
    }
    let acers: Vec<f64> = per_type.iter().map(|r| r.acer).collect();
    let mean = acers.iter().sum::<f64>() / acers.len() as f64;
    let var = acers.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / acers.len() as f64;
    Ok(LooOutcome {
        folds: per_type,
        mean,
        std: var.sqrt(),
    })
}

/// One row per report; the per-type breakdown stays in the JSON form.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("protocol,threshold,apcer,bpcer,acer,hter\n");
    for r in reports {
        let hter = r.hter.map(|h| h.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.protocol, r.threshold, r.apcer, r.bpcer, r.acer, hter
        ));
    }
    out
}

/// Wide layout: one ACER column per held-out instrument, then the mean and
/// spread.
pub fn loo_to_csv(outcome: &LooOutcome) -> String {
    let mut header = Vec::new();
    let mut row = Vec::new();
    for fold in &outcome.folds {
        header.push(fold.attack_type.clone().unwrap_or_else(|| "unknown".into()));
        row.push(fold.acer.to_string());
    }
    header.push("mean".into());
    header.push("std".into());
    row.push(outcome.mean.to_string());
    row.push(outcome.std.to_string());
    format!("{}\n{}\n", header.join(","), row.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn attack(score: f64, ty: &str, split: Split) -> ScoredSample {
        ScoredSample::new(score, TruthLabel::Attack, Some(ty.to_string()), split).unwrap()
    }

    fn bona(score: f64, split: Split) -> ScoredSample {
        ScoredSample::new(score, TruthLabel::BonaFide, None, split).unwrap()
    }

    #[test]
    fn counting_oracles() {
        let samples = vec![
            attack(0.9, "print", Split::Test),
            attack(0.4, "print", Split::Test),
            attack(0.2, "print", Split::Test),
            bona(0.1, Split::Test),
            bona(0.3, Split::Test),
            bona(0.8, Split::Test),
            bona(0.05, Split::Test),
        ];
        // At t = 0.5: attacks <= t: 2 of 3. Bona > t: 1 of 4.
        assert_abs_diff_eq!(apcer(&samples, 0.5).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bpcer(&samples, 0.5).unwrap(), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(
            acer(&samples, 0.5).unwrap(),
            (2.0 / 3.0 + 0.25) / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn apcer_takes_worst_type() {
        let samples = vec![
            attack(0.9, "print", Split::Test),
            attack(0.8, "print", Split::Test),
            attack(0.1, "replay", Split::Test),
            attack(0.9, "replay", Split::Test),
            bona(0.2, Split::Test),
        ];
        // print misses 0/2, replay misses 1/2.
        assert_abs_diff_eq!(apcer(&samples, 0.5).unwrap(), 0.5, epsilon = 1e-12);
        let per = per_type_apcer(&samples, 0.5).unwrap();
        assert_eq!(per["print"], 0.0);
        assert_eq!(per["replay"], 0.5);
    }

    #[test]
    fn acer_identity_over_threshold_sweep() {
        let samples = vec![
            attack(0.7, "print", Split::Test),
            attack(0.3, "replay", Split::Test),
            attack(0.6, "replay", Split::Test),
            bona(0.2, Split::Test),
            bona(0.5, Split::Test),
        ];
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let lhs = acer(&samples, t).unwrap();
            let rhs = (apcer(&samples, t).unwrap() + bpcer(&samples, t).unwrap()) / 2.0;
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn rates_move_monotonically_with_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<ScoredSample> = (0..60)
            .map(|i| {
                let score = rng.gen_range(0.0..1.0);
                if i % 2 == 0 {
                    attack(score, "print", Split::Test)
                } else {
                    bona(score, Split::Test)
                }
            })
            .collect();
        let mut prev_apcer = -1.0;
        let mut prev_bpcer = 2.0;
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            let a = apcer(&samples, t).unwrap();
            let b = bpcer(&samples, t).unwrap();
            assert!(a >= prev_apcer, "miss rate fell as threshold rose");
            assert!(b <= prev_bpcer, "rejection rate rose as threshold rose");
            prev_apcer = a;
            prev_bpcer = b;
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut samples = vec![
            attack(0.9, "print", Split::Test),
            attack(0.4, "replay", Split::Test),
            bona(0.1, Split::Test),
            bona(0.6, Split::Test),
            bona(0.3, Split::Test),
        ];
        let before = acer(&samples, 0.5).unwrap();
        samples.reverse();
        assert_eq!(acer(&samples, 0.5).unwrap(), before);
        samples.swap(0, 2);
        assert_eq!(acer(&samples, 0.5).unwrap(), before);
    }

    #[test]
    fn empty_classes_are_errors() {
        let only_bona = vec![bona(0.1, Split::Test)];
        assert!(apcer(&only_bona, 0.5).is_err());
        let only_attack = vec![attack(0.9, "print", Split::Test)];
        assert!(bpcer(&only_attack, 0.5).is_err());
    }

    #[test]
    fn operating_point_respects_target() {
        let mut samples: Vec<ScoredSample> =
            (0..10).map(|i| bona(i as f64 / 10.0, Split::Dev)).collect();
        samples.push(attack(0.95, "print", Split::Dev));
        // n = 10, target 10%: k = 1, threshold = s[8] = 0.8.
        let t = threshold_at_bpcer(&samples, 10.0).unwrap();
        assert_eq!(t, 0.8);
        assert!(bpcer(&samples, t).unwrap() <= 0.10 + 1e-12);
        // Target >= 100%: k >= n, lowest bona score.
        let t_all = threshold_at_bpcer(&samples, 100.0).unwrap();
        assert_eq!(t_all, 0.0);
    }

    #[test]
    fn hter_quarter_fixture() {
        let dev = vec![
            attack(0.6, "print", Split::Dev),
            attack(0.9, "print", Split::Dev),
            bona(0.1, Split::Dev),
            bona(0.4, Split::Dev),
        ];
        let t = eer_threshold(&dev).unwrap();
        assert_eq!(t, 0.5);
        let test = vec![
            attack(0.4, "print", Split::Test),
            attack(0.8, "print", Split::Test),
            attack(0.9, "print", Split::Test),
            attack(0.7, "print", Split::Test),
            bona(0.2, Split::Test),
            bona(0.3, Split::Test),
            bona(0.6, Split::Test),
            bona(0.1, Split::Test),
        ];
        assert_abs_diff_eq!(hter(&dev, &test).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn random_scores_sit_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<ScoredSample> = (0..2000)
            .map(|_| {
                let score = rng.gen_range(0.0..1.0);
                if rng.gen_bool(0.5) {
                    attack(score, "print", Split::Test)
                } else {
                    bona(score, Split::Test)
                }
            })
            .collect();
        let a = acer(&samples, 0.5).unwrap();
        assert!((a - 0.5).abs() < 0.05, "uninformative scores gave {a}");
    }

    #[test]
    fn loo_runner_aggregates_per_type() {
        let types = vec!["print".to_string(), "replay".to_string()];
        let outcome = run_loo_protocol(&types, |held| {
            let mut scored = Vec::new();
            for i in 0..5 {
                scored.push(bona(0.05 + i as f64 * 0.01, Split::Dev));
                scored.push(bona(0.05 + i as f64 * 0.01, Split::Test));
            }
            // Dev keeps the types that were not held out.
            let other = if held == "print" { "replay" } else { "print" };
            scored.push(attack(0.85, other, Split::Dev));
            scored.push(attack(0.95, other, Split::Dev));
            // The held-out attacks separate perfectly for print, half for
            // replay.
            for i in 0..4 {
                let score = if held == "print" {
                    0.9
                } else if i % 2 == 0 {
                    0.9
                } else {
                    0.01
                };
                scored.push(attack(score, held, Split::Test));
            }
            Ok(scored)
        })
        .unwrap();
        assert_eq!(outcome.folds.len(), 2);
        assert_eq!(outcome.folds[0].attack_type.as_deref(), Some("print"));
        let a0 = outcome.folds[0].acer;
        let a1 = outcome.folds[1].acer;
        let mean = (a0 + a1) / 2.0;
        assert_abs_diff_eq!(outcome.mean, mean, epsilon = 1e-12);
        let std = (((a0 - mean).powi(2) + (a1 - mean).powi(2)) / 2.0).sqrt();
        assert_abs_diff_eq!(outcome.std, std, epsilon = 1e-12);
        assert!(a0 < a1, "print fold should be cleaner");
        let csv = loo_to_csv(&outcome);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "print,replay,mean,std");
        assert!(lines.next().unwrap().split(',').count() == 4);
    }

    #[test]
    fn loo_runner_rejects_leakage() {
        let types = vec!["print".to_string()];
        let res = run_loo_protocol(&types, |_| {
            Ok(vec![
                bona(0.1, Split::Dev),
                attack(0.9, "print", Split::Dev),
                attack(0.9, "print", Split::Test),
                bona(0.1, Split::Test),
            ])
        });
        assert!(res.is_err());
        let res2 = run_loo_protocol(&types, |_| {
            Ok(vec![
                bona(0.1, Split::Dev),
                attack(0.9, "replay", Split::Test),
                bona(0.1, Split::Test),
            ])
        });
        assert!(res2.is_err());
    }

    #[test]
    fn csv_rows_match_reports() {
        let report = EvalReport {
            protocol: "intra".into(),
            attack_type: None,
            threshold: 0.25,
            apcer: 0.1,
            bpcer: 0.2,
            acer: 0.15,
            per_type_apcer: BTreeMap::new(),
            hter: Some(0.12),
        };
        let csv = reports_to_csv(&[report.clone()]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "protocol,threshold,apcer,bpcer,acer,hter");
        assert_eq!(lines.next().unwrap(), "intra,0.25,0.1,0.2,0.15,0.12");
        let parsed: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(parsed.acer, report.acer);
    }
}
